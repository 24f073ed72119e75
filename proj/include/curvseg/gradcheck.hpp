#pragma once

#include <cstdint>

#include "curvseg/embednet.hpp"

namespace curvseg {

/// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor only
/// keeps exactly-zero components from dividing by zero.
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Random network + 16x16 scene with 2-3 instances, targets at head resolution.
struct GradcheckFixture {
  ModelParams params;
  ImageGrid image;
  Mask seg_target;
  LabelMap labels;
  /// Embeddings drawn so that pull and push hinges are active.
  EmbeddingField embedding;
};

GradcheckFixture make_gradcheck_fixture(std::uint64_t seed, std::size_t size = 16);

/// Checks use the fourth-order central stencil at +-step, +-2 step; with the
/// two-point stencil at step 1e-3, O(step^2) truncation reaches ~1e-4 relative
/// on conv3 weights.

/// Central differences of discriminative_loss w.r.t. every embedding entry.
double check_discriminative_gradient(const EmbeddingField& embedding, const LabelMap& labels,
                                     const LossConfig& cfg, double step);

/// Central differences of total_loss_and_grad w.r.t. every network parameter.
double check_total_gradient(const ModelParams& params, const ImageGrid& image, const Mask& seg_target,
                            const LabelMap& labels, const LossConfig& cfg, double step);

struct GradcheckReport {
  std::size_t fixtures = 0;
  double max_error_discriminative = 0.0;
  double max_error_total = 0.0;
};

GradcheckReport run_gradcheck(std::size_t fixtures, std::uint64_t seed, double step = 1e-3,
                              const LossConfig& cfg = {});

}  // namespace curvseg
