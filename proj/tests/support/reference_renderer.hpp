// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "splatlift/splat_render.hpp"

namespace splatlift::testing {

// Exhaustive per-pixel reference: every gaussian is projected and tested at
// every pixel, contributors sorted by (depth, index), full compositing with
// no early exit and no binning. Kept deliberately naive and independent of
// the optimized renderer's internals.
RenderOutput reference_render(const GaussianScene& scene, const Camera& cam);

} // namespace splatlift::testing
