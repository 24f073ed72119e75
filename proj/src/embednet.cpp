#include "curvseg/embednet.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "curvseg/errors.hpp"
#include "curvseg/synthgen.hpp"

namespace curvseg {

namespace {

constexpr std::size_t kKernel = 3;

}  // namespace

// ---------------------------------------------------------------------------
// Parameters

ModelParams::ModelParams(const Architecture& arch) : arch_(arch) {
  if (arch.in_channels == 0 || arch.channels == 0 || arch.embedding_dim == 0) {
    throw std::invalid_argument("Architecture: channel counts must be >= 1");
  }
  const std::size_t ci = arch.in_channels;
  const std::size_t c = arch.channels;
  const std::size_t d = arch.embedding_dim;
  const std::array<std::pair<const char*, std::vector<std::size_t>>, kSlotCount> shapes = {{
      {"trunk.conv1.weight", {c, ci, kKernel, kKernel}},
      {"trunk.conv1.bias", {c}},
      {"trunk.conv2.weight", {c, c, kKernel, kKernel}},
      {"trunk.conv2.bias", {c}},
      {"trunk.conv3.weight", {c, c, kKernel, kKernel}},
      {"trunk.conv3.bias", {c}},
      {"seg_head.weight", {1, c, 1, 1}},
      {"seg_head.bias", {1}},
      {"emb_head.weight", {d, c, 1, 1}},
      {"emb_head.bias", {d}},
  }};
  std::size_t offset = 0;
  for (std::size_t i = 0; i < kSlotCount; ++i) {
    auto& info = layout_[i];
    info.name = shapes[i].first;
    info.shape = shapes[i].second;
    info.size = std::accumulate(info.shape.begin(), info.shape.end(), std::size_t{1},
                                std::multiplies<>());
    info.offset = offset;
    offset += info.size;
  }
  values_.assign(offset, 0.0);
}

ModelParams ModelParams::initialize(const Architecture& arch, std::uint64_t seed) {
  ModelParams p(arch);
  std::mt19937_64 rng(seed);
  const auto fill = [&](Slot s, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : p.tensor(s)) v = dist(rng);
  };
  const auto fan_in = [&](Slot s) {
    const auto& shape = p.info(s).shape;
    return static_cast<double>(shape[1] * shape[2] * shape[3]);
  };
  for (Slot s : {Slot::kConv1Weight, Slot::kConv2Weight, Slot::kConv3Weight}) {
    fill(s, std::sqrt(6.0 / fan_in(s)));
  }
  for (Slot s : {Slot::kSegWeight, Slot::kEmbWeight}) {
    fill(s, 1.0 / std::sqrt(fan_in(s)));
  }
  return p;
}

bool ModelParams::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void LossConfig::validate() const {
  if (!(delta_v > 0.0)) throw std::invalid_argument("LossConfig: delta_v must be > 0");
  if (!(delta_d > 2.0 * delta_v)) {
    throw std::invalid_argument("LossConfig: delta_d must exceed 2 * delta_v");
  }
  if (w_var < 0.0 || w_dist < 0.0 || w_dice < 0.0 || w_disc < 0.0) {
    throw std::invalid_argument("LossConfig: weights must be >= 0");
  }
  if (!(dice_smooth > 0.0)) throw std::invalid_argument("LossConfig: dice_smooth must be > 0");
}

void OptimConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("OptimConfig: learning_rate must be > 0");
  if (weight_decay < 0.0) throw std::invalid_argument("OptimConfig: weight_decay must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("OptimConfig: batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("OptimConfig: betas must lie in [0,1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("OptimConfig: epsilon must be > 0");
}

// ---------------------------------------------------------------------------
// Layers

namespace {

struct FeatureMap {
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<double> v;

  FeatureMap() = default;
  FeatureMap(std::size_t c_, std::size_t h_, std::size_t w_) : c(c_), h(h_), w(w_), v(c_ * h_ * w_, 0.0) {}
  double* plane(std::size_t ch) { return v.data() + ch * h * w; }
  const double* plane(std::size_t ch) const { return v.data() + ch * h * w; }
};

struct ConvGeometry {
  std::size_t k;
  std::size_t stride;
  std::size_t pad;

  std::size_t out_extent(std::size_t in) const { return (in + 2 * pad - k) / stride + 1; }

  // Output index range [lo, hi) whose input position o*stride + tap - pad lands in [0, in).
  std::pair<std::size_t, std::size_t> valid(std::size_t tap, std::size_t in, std::size_t out) const {
    const auto s = static_cast<long>(stride);
    const long shift = static_cast<long>(tap) - static_cast<long>(pad);
    long lo = shift >= 0 ? 0 : (-shift + s - 1) / s;
    long hi = (static_cast<long>(in) - 1 - shift);
    hi = hi < 0 ? 0 : hi / s + 1;
    hi = std::min<long>(hi, static_cast<long>(out));
    lo = std::min(lo, hi);
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
  }
};

FeatureMap conv_forward(const FeatureMap& in, std::span<const double> weight,
                        std::span<const double> bias, std::size_t out_channels,
                        const ConvGeometry& g) {
  const std::size_t ho = g.out_extent(in.h);
  const std::size_t wo = g.out_extent(in.w);
  FeatureMap out(out_channels, ho, wo);
  for (std::size_t co = 0; co < out_channels; ++co) {
    double* dst = out.plane(co);
    std::fill(dst, dst + ho * wo, bias[co]);
    for (std::size_t ci = 0; ci < in.c; ++ci) {
      const double* src = in.plane(ci);
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        const auto [oy0, oy1] = g.valid(ky, in.h, ho);
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const auto [ox0, ox1] = g.valid(kx, in.w, wo);
          const double wv = weight[((co * in.c + ci) * g.k + ky) * g.k + kx];
          if (wv == 0.0) continue;
          for (std::size_t oy = oy0; oy < oy1; ++oy) {
            const double* srow = src + (oy * g.stride + ky - g.pad) * in.w;
            double* drow = dst + oy * wo;
            for (std::size_t ox = ox0; ox < ox1; ++ox) {
              drow[ox] += wv * srow[ox * g.stride + kx - g.pad];
            }
          }
        }
      }
    }
  }
  return out;
}

// Accumulates weight/bias gradients; writes the input gradient when `d_in` is set.
void conv_backward(const FeatureMap& in, std::span<const double> weight, const FeatureMap& d_out,
                   const ConvGeometry& g, std::span<double> d_weight, std::span<double> d_bias,
                   FeatureMap* d_in) {
  const std::size_t ho = d_out.h;
  const std::size_t wo = d_out.w;
  if (d_in != nullptr) *d_in = FeatureMap(in.c, in.h, in.w);
  for (std::size_t co = 0; co < d_out.c; ++co) {
    const double* grad = d_out.plane(co);
    double bsum = 0.0;
    for (std::size_t i = 0; i < ho * wo; ++i) bsum += grad[i];
    d_bias[co] += bsum;
    for (std::size_t ci = 0; ci < in.c; ++ci) {
      const double* src = in.plane(ci);
      double* dsrc = d_in != nullptr ? d_in->plane(ci) : nullptr;
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        const auto [oy0, oy1] = g.valid(ky, in.h, ho);
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const auto [ox0, ox1] = g.valid(kx, in.w, wo);
          const std::size_t widx = ((co * in.c + ci) * g.k + ky) * g.k + kx;
          const double wv = weight[widx];
          double wsum = 0.0;
          for (std::size_t oy = oy0; oy < oy1; ++oy) {
            const std::size_t row = (oy * g.stride + ky - g.pad) * in.w;
            const double* grow = grad + oy * wo;
            for (std::size_t ox = ox0; ox < ox1; ++ox) {
              wsum += grow[ox] * src[row + ox * g.stride + kx - g.pad];
            }
            if (dsrc != nullptr) {
              for (std::size_t ox = ox0; ox < ox1; ++ox) {
                dsrc[row + ox * g.stride + kx - g.pad] += wv * grow[ox];
              }
            }
          }
          d_weight[widx] += wsum;
        }
      }
    }
  }
}

inline double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

FeatureMap apply_softplus(const FeatureMap& z) {
  FeatureMap a = z;
  for (auto& v : a.v) v = softplus(v);
  return a;
}

// d(out)/d(z) of softplus is the logistic function; multiplies in place.
void softplus_backward(const FeatureMap& z, FeatureMap& grad) {
  for (std::size_t i = 0; i < grad.v.size(); ++i) grad.v[i] *= sigmoid(z.v[i]);
}

const ConvGeometry kConv3x3{kKernel, 1, 1};
const ConvGeometry kConv3x3Stride2{kKernel, 2, 1};
const ConvGeometry kConv1x1{1, 1, 0};

struct ForwardCache {
  FeatureMap input;
  FeatureMap z1, a1, z2, a2, z3, a3;
  FeatureMap logit;
  FeatureMap emb;
};

ForwardCache run_forward(const ModelParams& params, const ImageGrid& image) {
  const auto& arch = params.arch();
  if (arch.in_channels != 1) {
    throw std::invalid_argument("forward: grayscale input requires in_channels == 1");
  }
  if (image.height() % Architecture::kDownsample != 0 || image.width() % Architecture::kDownsample != 0) {
    throw std::invalid_argument("forward: image dimensions must be divisible by 2");
  }
  ForwardCache fc;
  fc.input = FeatureMap(1, image.height(), image.width());
  std::copy(image.values().begin(), image.values().end(), fc.input.v.begin());
  fc.z1 = conv_forward(fc.input, params.tensor(Slot::kConv1Weight), params.tensor(Slot::kConv1Bias),
                       arch.channels, kConv3x3);
  fc.a1 = apply_softplus(fc.z1);
  fc.z2 = conv_forward(fc.a1, params.tensor(Slot::kConv2Weight), params.tensor(Slot::kConv2Bias),
                       arch.channels, kConv3x3Stride2);
  fc.a2 = apply_softplus(fc.z2);
  fc.z3 = conv_forward(fc.a2, params.tensor(Slot::kConv3Weight), params.tensor(Slot::kConv3Bias),
                       arch.channels, kConv3x3);
  fc.a3 = apply_softplus(fc.z3);
  fc.logit = conv_forward(fc.a3, params.tensor(Slot::kSegWeight), params.tensor(Slot::kSegBias), 1,
                          kConv1x1);
  fc.emb = conv_forward(fc.a3, params.tensor(Slot::kEmbWeight), params.tensor(Slot::kEmbBias),
                        arch.embedding_dim, kConv1x1);
  return fc;
}

NetworkOutput to_output(const ForwardCache& fc) {
  const std::size_t h = fc.logit.h;
  const std::size_t w = fc.logit.w;
  NetworkOutput out{ImageGrid(h, w), EmbeddingField(h, w, fc.emb.c)};
  for (std::size_t i = 0; i < h * w; ++i) out.seg_prob[i] = sigmoid(fc.logit.v[i]);
  for (std::size_t d = 0; d < fc.emb.c; ++d) {
    const double* src = fc.emb.plane(d);
    auto dst = out.embedding.values();
    for (std::size_t i = 0; i < h * w; ++i) dst[i * fc.emb.c + d] = src[i];
  }
  return out;
}

}  // namespace

NetworkOutput forward(const ModelParams& params, const ImageGrid& image) {
  return to_output(run_forward(params, image));
}

// ---------------------------------------------------------------------------
// Losses

double dice_loss(const ImageGrid& prob, const Mask& target, double smooth) {
  if (!prob.same_shape(target)) throw std::invalid_argument("dice_loss: dimension mismatch");
  double inter = 0.0;
  double psum = 0.0;
  double tsum = 0.0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const double t = target[i] ? 1.0 : 0.0;
    inter += prob[i] * t;
    psum += prob[i];
    tsum += t;
  }
  return 1.0 - (2.0 * inter + smooth) / (psum + tsum + smooth);
}

ImageGrid dice_loss_grad(const ImageGrid& prob, const Mask& target, double smooth) {
  if (!prob.same_shape(target)) throw std::invalid_argument("dice_loss_grad: dimension mismatch");
  double inter = 0.0;
  double psum = 0.0;
  double tsum = 0.0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const double t = target[i] ? 1.0 : 0.0;
    inter += prob[i] * t;
    psum += prob[i];
    tsum += t;
  }
  const double num = 2.0 * inter + smooth;
  const double den = psum + tsum + smooth;
  ImageGrid grad(prob.height(), prob.width());
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const double t = target[i] ? 1.0 : 0.0;
    grad[i] = -(2.0 * t * den - num) / (den * den);
  }
  return grad;
}

DiscriminativeResult discriminative_loss(const EmbeddingField& embedding, const LabelMap& labels,
                                         const LossConfig& cfg) {
  if (!labels.same_shape(embedding.height(), embedding.width())) {
    throw std::invalid_argument("discriminative_loss: labels and embedding differ in dimensions");
  }
  const std::size_t dim = embedding.dim();
  const std::size_t n = labels.size();
  DiscriminativeResult res{0.0, 0.0, 0.0,
                           EmbeddingField(embedding.height(), embedding.width(), dim, 0.0)};

  std::map<int, std::size_t> index_of;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] > 0) index_of.emplace(labels[i], 0);
  }
  const std::size_t clusters = index_of.size();
  if (clusters == 0) return res;
  {
    std::size_t k = 0;
    for (auto& [id, idx] : index_of) idx = k++;
  }

  std::vector<std::size_t> member(n, clusters);  // `clusters` marks background
  std::vector<double> counts(clusters, 0.0);
  std::vector<double> means(clusters * dim, 0.0);
  const auto emb = embedding.values();
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] <= 0) continue;
    const std::size_t c = index_of[labels[i]];
    member[i] = c;
    counts[c] += 1.0;
    for (std::size_t d = 0; d < dim; ++d) means[c * dim + d] += emb[i * dim + d];
  }
  for (std::size_t c = 0; c < clusters; ++c) {
    for (std::size_t d = 0; d < dim; ++d) means[c * dim + d] /= counts[c];
  }
  const double cdbl = static_cast<double>(clusters);
  auto grad = res.grad.values();

  // Pull term.
  std::vector<double> hinge(n, 0.0);
  std::vector<double> unit(n * dim, 0.0);
  std::vector<double> pull_sum(clusters * dim, 0.0);
  std::vector<double> var_per_cluster(clusters, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = member[i];
    if (c == clusters) continue;
    double dist2 = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = means[c * dim + d] - emb[i * dim + d];
      dist2 += diff * diff;
    }
    const double dist = std::sqrt(dist2);
    const double h = std::max(0.0, dist - cfg.delta_v);
    var_per_cluster[c] += h * h;
    hinge[i] = h;
    if (h > 0.0 && dist > 0.0) {
      for (std::size_t d = 0; d < dim; ++d) {
        const double u = (means[c * dim + d] - emb[i * dim + d]) / dist;
        unit[i * dim + d] = u;
        pull_sum[c * dim + d] += h * u;
      }
    }
  }
  double l_var = 0.0;
  for (std::size_t c = 0; c < clusters; ++c) l_var += var_per_cluster[c] / counts[c];
  l_var /= cdbl;

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = member[i];
    if (c == clusters) continue;
    const double scale = cfg.w_var * 2.0 / (cdbl * counts[c]);
    for (std::size_t d = 0; d < dim; ++d) {
      grad[i * dim + d] += scale * (pull_sum[c * dim + d] / counts[c] - hinge[i] * unit[i * dim + d]);
    }
  }

  // Push term over ordered pairs; each unordered pair appears twice.
  double l_dist = 0.0;
  if (clusters > 1) {
    const double norm = 1.0 / (cdbl * (cdbl - 1.0));
    std::vector<double> d_mean(clusters * dim, 0.0);
    for (std::size_t a = 0; a < clusters; ++a) {
      for (std::size_t b = a + 1; b < clusters; ++b) {
        double dist2 = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
          const double diff = means[a * dim + d] - means[b * dim + d];
          dist2 += diff * diff;
        }
        const double dist = std::sqrt(dist2);
        const double g = std::max(0.0, cfg.delta_d - dist);
        l_dist += 2.0 * g * g;
        if (g > 0.0 && dist > 0.0) {
          for (std::size_t d = 0; d < dim; ++d) {
            const double v = (means[a * dim + d] - means[b * dim + d]) / dist;
            // d/d(mu_a) of 2 g^2 is -4 g v; mu_b gets the opposite sign.
            d_mean[a * dim + d] -= 4.0 * g * v * norm;
            d_mean[b * dim + d] += 4.0 * g * v * norm;
          }
        }
      }
    }
    l_dist *= norm;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = member[i];
      if (c == clusters) continue;
      for (std::size_t d = 0; d < dim; ++d) {
        grad[i * dim + d] += cfg.w_dist * d_mean[c * dim + d] / counts[c];
      }
    }
  }

  res.variance_term = l_var;
  res.distance_term = l_dist;
  res.loss = cfg.w_var * l_var + cfg.w_dist * l_dist;
  return res;
}

Targets downsample_targets(const LabelMap& full_res, std::size_t factor) {
  if (factor == 0 || full_res.height() % factor != 0 || full_res.width() % factor != 0) {
    throw std::invalid_argument("downsample_targets: dimensions not divisible by factor");
  }
  const std::size_t h = full_res.height() / factor;
  const std::size_t w = full_res.width() / factor;
  const std::size_t block = factor * factor;
  Targets out{Mask(h, w, 0), LabelMap(h, w, 0)};
  std::map<int, std::size_t> votes;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      votes.clear();
      std::size_t fg = 0;
      for (std::size_t dy = 0; dy < factor; ++dy) {
        for (std::size_t dx = 0; dx < factor; ++dx) {
          const int id = full_res.at(r * factor + dy, c * factor + dx);
          if (id > 0) {
            ++fg;
            ++votes[id];
          }
        }
      }
      if (2 * fg < block) continue;
      out.segmentation.at(r, c) = 1;
      int best = 0;
      std::size_t best_votes = 0;
      for (const auto& [id, v] : votes) {  // ascending id: ties keep the lowest
        if (v > best_votes) {
          best = id;
          best_votes = v;
        }
      }
      out.instances.at(r, c) = best;
    }
  }
  return out;
}

LossAndGrad total_loss_and_grad(const ModelParams& params, const ImageGrid& image,
                                const Mask& seg_target, const LabelMap& instance_labels,
                                const LossConfig& cfg, bool need_grad) {
  const ForwardCache fc = run_forward(params, image);
  const std::size_t h = fc.logit.h;
  const std::size_t w = fc.logit.w;
  if (!seg_target.same_shape(h, w) || !instance_labels.same_shape(h, w)) {
    throw std::invalid_argument("total_loss_and_grad: targets must be at head resolution");
  }
  const NetworkOutput out = to_output(fc);
  LossAndGrad res{0.0, 0.0, 0.0, ModelParams(params.arch())};
  res.dice = dice_loss(out.seg_prob, seg_target, cfg.dice_smooth);
  const DiscriminativeResult disc = discriminative_loss(out.embedding, instance_labels, cfg);
  res.discriminative = disc.loss;
  res.loss = cfg.w_dice * res.dice + cfg.w_disc * res.discriminative;
  if (!need_grad) return res;

  // Head gradients.
  FeatureMap d_logit(1, h, w);
  const ImageGrid d_prob = dice_loss_grad(out.seg_prob, seg_target, cfg.dice_smooth);
  for (std::size_t i = 0; i < h * w; ++i) {
    const double p = out.seg_prob[i];
    d_logit.v[i] = cfg.w_dice * d_prob[i] * p * (1.0 - p);
  }
  const std::size_t dim = out.embedding.dim();
  FeatureMap d_emb(dim, h, w);
  const auto g = disc.grad.values();
  for (std::size_t i = 0; i < h * w; ++i) {
    for (std::size_t d = 0; d < dim; ++d) d_emb.plane(d)[i] = cfg.w_disc * g[i * dim + d];
  }

  ModelParams& grads = res.grad;
  FeatureMap d_a3_seg;
  FeatureMap d_a3;
  conv_backward(fc.a3, params.tensor(Slot::kSegWeight), d_logit, kConv1x1,
                grads.tensor(Slot::kSegWeight), grads.tensor(Slot::kSegBias), &d_a3_seg);
  conv_backward(fc.a3, params.tensor(Slot::kEmbWeight), d_emb, kConv1x1,
                grads.tensor(Slot::kEmbWeight), grads.tensor(Slot::kEmbBias), &d_a3);
  for (std::size_t i = 0; i < d_a3.v.size(); ++i) d_a3.v[i] += d_a3_seg.v[i];

  softplus_backward(fc.z3, d_a3);
  FeatureMap d_a2;
  conv_backward(fc.a2, params.tensor(Slot::kConv3Weight), d_a3, kConv3x3,
                grads.tensor(Slot::kConv3Weight), grads.tensor(Slot::kConv3Bias), &d_a2);
  softplus_backward(fc.z2, d_a2);
  FeatureMap d_a1;
  conv_backward(fc.a1, params.tensor(Slot::kConv2Weight), d_a2, kConv3x3Stride2,
                grads.tensor(Slot::kConv2Weight), grads.tensor(Slot::kConv2Bias), &d_a1);
  softplus_backward(fc.z1, d_a1);
  conv_backward(fc.input, params.tensor(Slot::kConv1Weight), d_a1, kConv3x3,
                grads.tensor(Slot::kConv1Weight), grads.tensor(Slot::kConv1Bias), nullptr);
  return res;
}

// ---------------------------------------------------------------------------
// Optimization

void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                const OptimConfig& cfg) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adamw_step: parameter and gradient sizes differ");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericError("adamw_step: non-finite gradient");
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  } else if (state.m.size() != params.size()) {
    throw std::invalid_argument("adamw_step: optimizer state does not match parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / bias1;
    const double v_hat = state.v[i] / bias2;
    params[i] = params[i] * decay - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

namespace {

LossAndGrad sample_loss(const ModelParams& params, const ImageGrid& image,
                        const InstanceSet& instances, const LossConfig& cfg,
                        std::uint64_t label_seed, bool need_grad) {
  const LabelMap full = make_training_labels(instances, label_seed);
  const Targets t = downsample_targets(full, Architecture::kDownsample);
  return total_loss_and_grad(params, image, t.segmentation, t.instances, cfg, need_grad);
}

}  // namespace

double evaluate_loss(const ModelParams& params, const std::vector<TrainSample>& samples,
                     const LossConfig& cfg, std::uint64_t label_seed) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    total += sample_loss(params, samples[i].image, samples[i].instances, cfg,
                         derive_seed(label_seed, 0xA11, i), false)
                 .loss;
  }
  return total / static_cast<double>(samples.size());
}

ModelParams initial_params(const TrainConfig& cfg) {
  return ModelParams::initialize(cfg.arch, derive_seed(cfg.seed, 0x1417, 0));
}

TrainResult train(const std::vector<TrainSample>& train_set, const std::vector<TrainSample>& val_set,
                  const TrainConfig& cfg) {
  cfg.loss.validate();
  cfg.optim.validate();
  cfg.augment.validate();
  if (train_set.empty() || val_set.empty()) {
    throw std::invalid_argument("train: need at least one training and one validation sample");
  }
  TrainResult result;
  result.params = initial_params(cfg);
  if (cfg.optim.epochs == 0) return result;

  ModelParams params = result.params;
  AdamWState state;
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 0x5F1, 0));
  std::vector<std::size_t> order(train_set.size());
  double best_val = 0.0;
  const std::uint64_t val_seed = derive_seed(cfg.seed, 0x7A1, 0);

  for (std::size_t epoch = 1; epoch <= cfg.optim.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::vector<double> grad_sum(params.size());
    for (std::size_t start = 0; start < order.size(); start += cfg.optim.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.optim.batch_size);
      std::fill(grad_sum.begin(), grad_sum.end(), 0.0);
      for (std::size_t j = start; j < stop; ++j) {
        const std::size_t idx = order[j];
        const std::uint64_t sample_seed = derive_seed(cfg.seed, epoch, idx);
        const TrainSample& s = train_set[idx];
        LossAndGrad lg;
        if (cfg.use_augmentation) {
          const Augmented a = augment(s.image, s.instances, cfg.augment, sample_seed);
          lg = sample_loss(params, a.image, a.labels, cfg.loss, sample_seed ^ 0x1ULL, true);
        } else {
          lg = sample_loss(params, s.image, s.instances, cfg.loss, sample_seed ^ 0x1ULL, true);
        }
        if (!std::isfinite(lg.loss)) {
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             ", sample " + std::to_string(idx));
        }
        epoch_loss += lg.loss;
        const auto g = lg.grad.flat();
        for (std::size_t k = 0; k < g.size(); ++k) grad_sum[k] += g[k];
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (auto& g : grad_sum) g *= inv;
      adamw_step(params.flat(), grad_sum, state, cfg.optim);
    }
    const double train_loss = epoch_loss / static_cast<double>(train_set.size());
    const double val_loss = evaluate_loss(params, val_set, cfg.loss, val_seed);
    if (!std::isfinite(val_loss)) {
      throw NumericError("train: non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.log.push_back({epoch, train_loss, val_loss});
    if (result.best_epoch == 0 || val_loss < best_val) {
      best_val = val_loss;
      result.best_epoch = epoch;
      result.params = params;
    }
  }
  return result;
}

}  // namespace curvseg
