# Copyright 2026 The RoadWatch Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""RoadWatch: size and skip rules, detection metrics, wire codecs and the
drive simulation harness."""

from ._roadwatch import (
    ArgumentError,
    CHUNK_HEADER_SIZE,
    ParseError,
    ProtocolError,
    WARNING_TEXT,
    average_precision,
    chunk_frame,
    classify_size,
    compute_fsi,
    decode_control,
    encode_control,
    general_warning_text,
    iou,
    kmh_to_mps,
    match,
    oracle_count,
    random_scenario,
    reassemble,
    render_scenario,
    rho_pixels,
    run_cli,
    run_equivalence,
    skip_frames,
)

__version__ = "0.1.0"
