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
# =============================================================================

import numpy as np
import pytest

import compgen as cg

TINY = """
[experiment]
name = py_tiny
train_samples = 200
test_samples = 100

[model]
composition = sigmoid
height = 4
width = 4
latents = x,y

[train_support]
kind = orthogonal
anchors0 = 0.25,0.25
anchors1 = 0.75,0.75

[test_support]
kind = full

[net]
hidden_width = 8
hidden_layers = 2

[train]
epochs = 2

[eval]
def2_resolution = 4
def2_probes = 2000
def3 = false
heatmap_resolution = 4
"""


def test_sampling_and_support():
    box = cg.LatentBox.unit(2, 2)
    spec = cg.SupportSpec.orthogonal(box, [[np.array([0.25, 0.25])], [np.array([0.75, 0.75])]], 0.02)
    s = cg.sample_support(spec, 500, 1)
    a = s.array()
    assert a.shape == (500, 4)
    assert all(spec.contains(row) for row in a)
    again = cg.sample_support(spec, 500, 1, jobs=2).array()
    np.testing.assert_array_equal(a, again)
    r = cg.check_compositional_support(spec, cg.SupportSpec.full_box(box), 4, 5000, 0)
    assert r["pass"]


def test_model_and_jacobian():
    sprite = cg.SpriteRenderer(height=4, width=4, latents=["x", "y"], edge_sharpness=8.0)
    model = cg.CompositionalModel([sprite, sprite], cg.CompositionKind.SUM)
    z = np.array([0.3, 0.4, 0.6, 0.7])
    x = cg.evaluate(model, z)
    parts = cg.render_components(model, z)
    assert x.shape == (model.observation_size,)
    np.testing.assert_allclose(x, parts[0] + parts[1], atol=1e-12)
    j = cg.jacobian_of_composition(model, z, 0, analytic=True)
    np.testing.assert_allclose(j, np.eye(model.canvas_size), atol=1e-12)
    rep = cg.rank_report(np.diag([1.0, 1e-6]))
    assert rep["rank"] == 1 and not rep["full_rank"]


def test_metrics_and_errors():
    t = np.random.default_rng(0).normal(size=(50, 3))
    mse, r2 = cg.evaluate_metrics(t, t)
    assert mse == 0.0 and r2 == pytest.approx(1.0)
    with pytest.raises(cg.ValidationError):
        cg.evaluate_metrics(np.ones((5, 2)), np.ones((5, 2)))
    with pytest.raises(cg.ValidationError):
        cg.parse_config("[model]\nnot_a_key = 1\n")


def test_config_and_run():
    c = cg.parse_config(TINY)
    assert c.name == "py_tiny"
    h = c.hash()
    c.name = "other"
    assert c.hash() == h
    rec = cg.run_experiment(c, 0)
    assert rec["def2_pass"]
    assert rec["def3_pass"] is None
    assert np.isfinite(rec["r2_all"])
