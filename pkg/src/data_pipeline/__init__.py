from src.data_pipeline.data_classes import BinaryMask, SamplePair, TrafficMovie
from src.data_pipeline.helpers import (
    apply_mask,
    denormalize,
    derive_mask,
    normalize,
    score,
)
from src.data_pipeline.movie_io import (
    import_chunks,
    movie_from_array,
    parse_array,
    parse_movie_name,
    read_array,
    read_mask,
    read_movie,
    write_array,
    write_mask,
    write_movie,
)
from src.data_pipeline.sampling import (
    count_samples,
    extract_samples,
    target_offsets,
    window_starts,
)
from src.data_pipeline.synthetic import road_skeleton, synth_city

__all__ = [
    "BinaryMask",
    "SamplePair",
    "TrafficMovie",
    "apply_mask",
    "count_samples",
    "denormalize",
    "derive_mask",
    "extract_samples",
    "import_chunks",
    "movie_from_array",
    "normalize",
    "parse_array",
    "parse_movie_name",
    "read_array",
    "read_mask",
    "read_movie",
    "road_skeleton",
    "score",
    "synth_city",
    "target_offsets",
    "window_starts",
    "write_array",
    "write_mask",
    "write_movie",
]
