# Trace data package

