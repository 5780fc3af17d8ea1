# Model package

