#include "hsc/attention.hpp"

#include <string>

namespace hsc {
namespace {

// [N, C] -> [N, 1, ..., 1, C] with `rank` total dimensions.
Tensor expand_channel_vector(const Tensor& vec, int rank) {
  Shape s(static_cast<std::size_t>(rank), 1);
  s.front() = vec.shape()[0];
  s.back() = vec.shape()[1];
  return reshape(vec, s);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw TensorError(std::string(op) + " needs equal shapes, got " + shape_str(a.shape()) +
                      " and " + shape_str(b.shape()));
}

}  // namespace

Tensor spectral_attention(const Tensor& vec, const Tensor& patch) {
  const Shape& ps = patch.shape();
  const Shape& vs = vec.shape();
  if (ps.size() < 2) throw TensorError("spectral attention patch must be [N, ..., B]");
  if (vs.empty() || vs.back() != ps.back())
    throw TensorError("spectral attention vector covers " +
                      std::to_string(vs.empty() ? 0 : vs.back()) + " bands, patch has " +
                      std::to_string(ps.back()));
  if (vs.size() == ps.size()) {
    for (std::size_t d = 1; d + 1 < vs.size(); ++d)
      if (vs[d] != 1)
        throw TensorError("expanded spectral vector must be singleton over space, got " +
                          shape_str(vs));
    return mul(patch, vec);
  }
  if (vs.size() != 2 || vs[0] != ps[0])
    throw TensorError("spectral attention vector must be [N, B], got " + shape_str(vs) +
                      " against patch " + shape_str(ps));
  return mul(patch, expand_channel_vector(vec, static_cast<int>(ps.size())));
}

Tensor spatial_attention(const Tensor& mask, const Tensor& patch) {
  require_same_shape("spatial attention", mask, patch);
  return mul(patch, mask);
}

Tensor adaptive_weights(const Tensor& logits) {
  if (logits.shape() != Shape{3})
    throw TensorError("adaptive combination takes exactly three logits, got " +
                      shape_str(logits.shape()));
  return softmax_lastdim(logits);
}

Tensor adaptive_combine(const Tensor& logits, const Tensor& f_b, const Tensor& f_a,
                        const Tensor& x) {
  require_same_shape("adaptive combine", f_b, f_a);
  require_same_shape("adaptive combine", f_b, x);
  Tensor w = adaptive_weights(logits);
  Tensor w1 = slice(w, 0, 0, 1);
  Tensor w2 = slice(w, 0, 1, 1);
  Tensor w3 = slice(w, 0, 2, 1);
  return add(add(mul(f_b, w1), mul(f_a, w2)), mul(x, w3));
}

Tensor cross_attention_mask(const Tensor& extracted, const Tensor& mask_source) {
  const Shape& es = extracted.shape();
  const Shape& ms = mask_source.shape();
  if (ms == es) return mul(extracted, mask_source);
  if (ms.size() == 2 && es.size() > 2 && ms[0] == es[0] && ms[1] == es.back())
    return mul(extracted, expand_channel_vector(mask_source, static_cast<int>(es.size())));
  throw TensorError("attention mask " + shape_str(ms) + " does not broadcast onto features " +
                    shape_str(es));
}

Tensor modality_fusion_input(const Tensor& x_h, const Tensor& x_l, const Tensor& m_s,
                             const Tensor& m_t) {
  const Shape& hs = x_h.shape();
  if (hs.size() < 3) throw TensorError("modality fusion inputs must be [N, spatial..., C]");
  const Tensor* parts[] = {&x_l, &m_s, &m_t};
  for (const Tensor* p : parts) {
    const Shape& s = p->shape();
    bool ok = s.size() == hs.size();
    for (std::size_t d = 0; ok && d + 1 < hs.size(); ++d) ok = s[d] == hs[d];
    if (!ok)
      throw TensorError("modality fusion spatial extents differ: " + shape_str(hs) + " vs " +
                        shape_str(s));
  }
  return concat(static_cast<int>(hs.size()) - 1, {x_h, x_l, m_s, m_t});
}

Tensor final_spectrospatial(const Tensor& f_m, const Tensor& a_m) {
  require_same_shape("spectral-spatial fusion", f_m, a_m);
  return mul(f_m, a_m);
}

}  // namespace hsc
