#pragma once

#include <string>
#include <vector>

#include "nest/config.hpp"
#include "nest/params.hpp"
#include "nest/tensor.hpp"

namespace nest {

// (b, H, W, d) <-> (b, #blocks, side*side, d). Blocks and the positions
// inside a block are both in raster order.
template <typename T>
BasicTensor<T> blockify(const BasicTensor<T>& plane, int block_side);
// Inverse of blockify for a square grid of square blocks.
template <typename T>
BasicTensor<T> unblockify(const BasicTensor<T>& blocks);

// Parameters of one aggregation step mapping width d to d_out, named
// under `prefix`. The reserved conv4x1 id throws NotImplementedError.
void append_aggregation_specs(std::vector<ParamSpec>& specs, const std::string& prefix, AggregationKind kind, int d,
                              int d_out);

// Spatial part of aggregation: (b, H, W, d) -> (b, H/2, W/2, d_out).
template <typename T>
BasicTensor<T> aggregate_plane(const BasicTensor<T>& plane, AggregationKind kind, const BasicParamSet<T>& params,
                               const std::string& prefix);

// (b, #blocks, n, d) -> (b, #blocks/4, n, d_out). Image-plane mode runs the
// spatial ops on the whole unblocked map; block-plane mode runs them on
// each 2x2 merge group's sub-map separately.
template <typename T>
BasicTensor<T> aggregate(const BasicTensor<T>& blocks, const AggregationSpec& spec, const BasicParamSet<T>& params,
                         const std::string& prefix);
// Same, starting from the unblocked plane (b, H, W, d) of side-`block_side` blocks.
template <typename T>
BasicTensor<T> aggregate_from_plane(const BasicTensor<T>& plane, const AggregationSpec& spec,
                                    const BasicParamSet<T>& params, const std::string& prefix, int block_side);

// Concatenates each 2x2 neighbourhood's channels and projects 4d -> d_out.
template <typename T>
BasicTensor<T> patch_merge(const BasicTensor<T>& plane, const BasicTensor<T>& kernel, const BasicTensor<T>& bias);
// Keeps the top-left element of every 2x2 cell.
template <typename T>
BasicTensor<T> subsample_2x2(const BasicTensor<T>& plane);

void append_deaggregation_specs(std::vector<ParamSpec>& specs, const std::string& prefix, DeaggregationKind kind,
                                int d);

// (b, #blocks, n, d) -> (b, 4 #blocks, n, d/4).
template <typename T>
BasicTensor<T> de_aggregate(const BasicTensor<T>& blocks, DeaggregationKind kind, const BasicParamSet<T>& params,
                            const std::string& prefix);

}  // namespace nest
