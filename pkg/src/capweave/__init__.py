"""capweave: hierarchical long-video caption synthesis, scoring, and benchmark curation.

The toolkit turns a video into a timestamped frame manifest, builds
overlapping sliding-window clips, drives remote captioner/summarizer
backends to weave frame- and clip-level captions into one long video
caption, scores candidate captions against references (length / judge
quality / judge relevance), and runs a small review service for curating
benchmark manifests.
"""

__version__ = "0.1.0"
