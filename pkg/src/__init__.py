# Source package


