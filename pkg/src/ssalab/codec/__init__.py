from .encode import (GC_FORMATS, PEG_FORMATS, SAT_FORMATS, TREE_FORMATS, GcCodec, PegCodec, SatCodec, Trace,
                     encode_block, encode_trace, encode_tree_trace, make_codec, state_length)
from .layout import (Layout, apply_history_reduction, assemble, layout_of, parse_layout, reduced_examples, split_trace,
                     state_rebuild, trace_from_tokens)
from .vocab import Vocabulary, build_vocabulary, gc_vocab, peg_vocab, sat_vocab, tree_vocab

__all__ = [
    "GC_FORMATS", "PEG_FORMATS", "SAT_FORMATS", "TREE_FORMATS", "GcCodec", "PegCodec", "SatCodec", "Trace",
    "encode_block", "encode_trace", "encode_tree_trace", "make_codec", "state_length", "Layout",
    "apply_history_reduction", "assemble", "layout_of", "parse_layout", "reduced_examples", "split_trace", "state_rebuild",
    "trace_from_tokens", "Vocabulary", "build_vocabulary", "gc_vocab", "peg_vocab", "sat_vocab", "tree_vocab",
]
