"""HTTP request anomaly detection platform.

Pieces, from the wire up:

- ``tokenizer``: byte-level BPE over raw request bytes.
- ``request_codec``: log-record parsing and flattening into the model input string.
- ``neuralnet``: embedding + multi-width 1D conv classifier with manual backprop.
- ``evalkit``: metrics, cross-validation, train-fraction sweeps, synthetic corpora.
- ``chunkwire``: framed TCP protocol, payload chunking, the model-serving process.
- ``logstore``: append-only scored-request store with filter and SQL-subset querying.
- ``service``: HTTP API, scoring pipeline, and the command line.
"""

__version__ = "0.1.0"
