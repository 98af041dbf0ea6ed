# Copyright 2026 The QuantGuard Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Post-training weight quantization with backdoor-removing rounding."""

from ._quantguard import (
    CONTAINER_VERSION,
    ContractError,
    Dataset,
    DimensionError,
    FormatError,
    Model,
    NumericError,
    QuantGuardError,
    ScaleScheme,
    build_planted_qcb,
    dtm,
    efrap_quantize,
    evaluate,
    forward,
    load_dataset,
    load_model,
    quantize_nearest,
    quantize_nearest_model,
    save_dataset,
    save_model,
)

__version__ = "0.1.0"

__all__ = [
    "CONTAINER_VERSION",
    "ContractError",
    "Dataset",
    "DimensionError",
    "FormatError",
    "Model",
    "NumericError",
    "QuantGuardError",
    "ScaleScheme",
    "build_planted_qcb",
    "dtm",
    "efrap_quantize",
    "evaluate",
    "forward",
    "load_dataset",
    "load_model",
    "quantize_nearest",
    "quantize_nearest_model",
    "save_dataset",
    "save_model",
]
