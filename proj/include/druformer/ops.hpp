#pragma once

#include <vector>

#include "druformer/tensor.hpp"

namespace druformer {

// Elementwise, same shape.
Tensor add(Tensor a, Tensor b);
Tensor sub(Tensor a, Tensor b);
Tensor mul(Tensor a, Tensor b);
Tensor div(Tensor a, Tensor b);
Tensor maximum(Tensor a, Tensor b);
Tensor minimum(Tensor a, Tensor b);

Tensor scalar_mul(Tensor x, double c);
Tensor scalar_add(Tensor x, double c);

// x: [r x d], v: [d], broadcast over rows.
Tensor add_rowvec(Tensor x, Tensor v);
// x: [C x H x W], b: [C], broadcast over the spatial plane.
Tensor add_chan(Tensor x, Tensor b);

Tensor matmul(Tensor a, Tensor b);
Tensor transpose(Tensor a);

Tensor relu(Tensor x);
Tensor sigmoid(Tensor x);
Tensor abs_val(Tensor x);

Tensor softmax_lastdim(Tensor x);
Tensor log_softmax_lastdim(Tensor x);
Tensor layer_norm(Tensor x, Tensor gamma, Tensor beta, double eps);

// x: [C_in x H x W], kernels: [C_out x C_in x kh x kw], valid convolution.
Tensor conv2d(Tensor x, Tensor kernels, int stride);
// Zero-pads the two spatial dims of a [C x H x W] tensor by p on each side.
Tensor pad2d(Tensor x, int p);
// [C x H x W] -> [(H*W) x C]; row i is spatial cell (i / W, i % W).
Tensor flatten_spatial(Tensor x);

Tensor reshape(Tensor x, std::vector<int> new_shape);
Tensor concat_rows(Tensor a, Tensor b);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(Tensor x, int r0, int r1);
Tensor slice_cols(Tensor x, int c0, int c1);
// Gathers full rows by index (duplicates allowed); backward scatter-adds.
Tensor select_rows(Tensor x, const std::vector<int>& idx);
// x: [r x c], col_idx: one column per row -> [r].
Tensor gather_rows(Tensor x, const std::vector<int>& col_idx);

Tensor sum_all(Tensor x);
Tensor mean_all(Tensor x);

}  // namespace druformer
