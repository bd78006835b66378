#pragma once

#include "hsc/tensor.hpp"

namespace hsc {

// Multiplicative attention operators. Every application is an elementwise or
// broadcast product, so ones-masks are identities, zero-masks annihilate, and
// each op is linear in the feature argument.

// vec [N, B] (or [N, 1..1, B]) reweights the bands of patch [N, spatial..., B].
Tensor spectral_attention(const Tensor& vec, const Tensor& patch);

// mask and patch share a shape; pointwise product.
Tensor spatial_attention(const Tensor& mask, const Tensor& patch);

// softmax of three trainable logits: weights sum to 1 by construction.
Tensor adaptive_weights(const Tensor& logits);
// w1*f_b + w2*f_a + w3*x over equal-shaped tensors.
Tensor adaptive_combine(const Tensor& logits, const Tensor& f_b, const Tensor& f_a,
                        const Tensor& x);

// Mask from one modality applied to the other's extracted features: a
// channel vector [N, C] broadcasts over space, a full map applies pointwise.
Tensor cross_attention_mask(const Tensor& extracted, const Tensor& mask_source);

// Channel concatenation [x_H | x_L | M_S | M_T]; spatial extents must agree.
Tensor modality_fusion_input(const Tensor& x_h, const Tensor& x_l, const Tensor& m_s,
                             const Tensor& m_t);

// F_M (*) A_M, the fused spectral-spatial features.
Tensor final_spectrospatial(const Tensor& f_m, const Tensor& a_m);

}  // namespace hsc
