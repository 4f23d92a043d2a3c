# Copyright 2026 The compgen Authors. All Rights Reserved.
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
# ==============================================================================
"""Python bindings for the compgen core library."""

from compgen._compgen import (  # noqa: F401
    CompositionKind,
    CompositionalModel,
    ExperimentConfig,
    LatentBox,
    RuntimeFailure,
    SampleSet,
    SmoothAnalytic,
    SpriteRenderer,
    SupportKind,
    SupportSpec,
    ValidationError,
    check_compositional_support,
    check_sufficient_support,
    evaluate,
    evaluate_metrics,
    jacobian_of_composition,
    load_config,
    parse_config,
    rank_report,
    reconstruct,
    render_components,
    run_experiment,
    sample_support,
    solve_component_jacobian,
)

__version__ = "0.1.0"
