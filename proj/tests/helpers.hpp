#pragma once

#include <cmath>
#include <vector>

#include "eac/eac.hpp"

// Shared generators and independent oracles. Oracles deliberately avoid the
// library's own code paths (quadrature instead of erf, direct loops instead
// of the shipped kernels) so they can catch implementation mistakes.

namespace testutil {

using namespace eac;

// --- quadrature oracle for the standard normal interval mass ---------------

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::acos(-1.0));
}

inline double simpson(double a, double b) {
  const double m = 0.5 * (a + b);
  return (b - a) / 6.0 * (normal_pdf(a) + 4.0 * normal_pdf(m) + normal_pdf(b));
}

inline double adaptive_simpson(double a, double b, double whole, double tol,
                               int depth) {
  const double m = 0.5 * (a + b);
  const double left = simpson(a, m);
  const double right = simpson(m, b);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return adaptive_simpson(a, m, left, tol * 0.5, depth - 1) +
         adaptive_simpson(m, b, right, tol * 0.5, depth - 1);
}

// Mass of N(0,1) on [a, b] via adaptive quadrature (no erf involved).
inline double interval_mass_oracle(double a, double b) {
  a = std::max(a, -40.0);
  b = std::min(b, 40.0);
  if (a >= b) return 0.0;
  return adaptive_simpson(a, b, simpson(a, b), 1e-15, 40);
}

inline double likelihood_oracle_raw(int v, double mu, double sigma) {
  return interval_mass_oracle((v - 0.5 - mu) / sigma, (v + 0.5 - mu) / sigma);
}

// --- random instances -------------------------------------------------------

inline LatentTensor random_latent(Rng& rng, const Dims& dims, int lo = -127,
                                  int hi = 127) {
  LatentTensor latent(dims);
  for (auto& v : latent.values) {
    v = static_cast<int16_t>(rng.next_int(lo, hi));
  }
  return latent;
}

inline MaskSet random_maskset(Rng& rng, const Dims& dims, int n) {
  MaskSet set;
  for (int i = 1; i <= n; ++i) set.masks.emplace_back(dims, i);
  for (std::size_t i = 0; i < dims.count(); ++i) {
    set.masks[rng.next_below(static_cast<uint64_t>(n))].bits[i] = 1;
  }
  return set;
}

inline GaussianField random_field(Rng& rng, const Dims& dims) {
  GaussianField field(dims);
  for (std::size_t i = 0; i < dims.count(); ++i) {
    field.mu[i] = rng.next_double() * 256.0 - 128.0;
    field.sigma[i] = scale_table()[static_cast<int>(rng.next_below(kScaleTableSize))];
  }
  return field;
}

inline PixelImage random_image(Rng& rng, int w, int h, int channels) {
  PixelImage img(w, h, channels);
  for (auto& s : img.samples) s = static_cast<uint8_t>(rng.next_below(256));
  return img;
}

// Smooth-ish test image: blockwise base level plus mild texture, so block
// means vary strongly (DC energy) while AC stays small.
inline PixelImage structured_image(Rng& rng, int w, int h, int channels) {
  PixelImage img(w, h, channels);
  const int gw = (w + 7) / 8;
  std::vector<int> base(static_cast<std::size_t>(gw) * ((h + 7) / 8));
  for (auto& b : base) b = static_cast<int>(rng.next_below(200)) + 28;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int b = base[static_cast<std::size_t>(y / 8) * gw + x / 8];
      for (int c = 0; c < channels; ++c) {
        const int noise = static_cast<int>(rng.next_below(17)) - 8;
        img.at(x, y, c) = static_cast<uint8_t>(std::clamp(b + noise, 0, 255));
      }
    }
  }
  return img;
}

// Matched-model instance for rate tests: integer means (so the estimate's
// model coincides with the coder's residual-centered tables) and values drawn
// from the coder's own distribution, re-drawn while they fall outside the
// latent range.
struct MatchedInstance {
  LatentTensor latent;
  CodingModel model;
};

inline MatchedInstance matched_instance(Rng& rng, const Dims& dims) {
  MatchedInstance inst;
  inst.latent = LatentTensor(dims);
  inst.model.field = GaussianField(dims);
  inst.model.sigma_idx.resize(dims.count());
  inst.model.mu_round.resize(dims.count());
  for (std::size_t i = 0; i < dims.count(); ++i) {
    const int mu = static_cast<int>(rng.next_int(-30, 30));
    const int sidx = static_cast<int>(rng.next_below(48));
    inst.model.field.mu[i] = mu;
    inst.model.field.sigma[i] = scale_table()[sidx];
    inst.model.sigma_idx[i] = static_cast<uint8_t>(sidx);
    inst.model.mu_round[i] = mu;
    const CdfTable& table = cdf_for_sigma(sidx);
    int v = 0;
    for (;;) {
      const int slot = table.find(static_cast<uint32_t>(rng.next_below(kFreqTotal)));
      if (slot == kEscapeSlot) continue;
      v = slot + kValueMin + mu;
      if (v >= kValueMin && v <= kValueMax) break;
    }
    inst.latent.values[i] = static_cast<int16_t>(v);
  }
  return inst;
}

inline Dims random_dims(Rng& rng, int max_c = 8, int max_h = 16, int max_w = 16) {
  return Dims{static_cast<int>(rng.next_int(1, max_c)),
              static_cast<int>(rng.next_int(1, max_h)),
              static_cast<int>(rng.next_int(1, max_w))};
}

inline PredictorConfig topk_config(std::initializer_list<double> keeps) {
  PredictorConfig cfg;
  cfg.kind = PredictorKind::kSigmaTopK;
  for (double k : keeps) cfg.keep.push_back(KeepFraction::from_double(k));
  return cfg;
}

inline PredictorConfig gumbel_config(std::shared_ptr<const ConvPredictorWeights> w) {
  PredictorConfig cfg;
  cfg.kind = PredictorKind::kConvGumbel;
  cfg.weights = std::move(w);
  return cfg;
}

}  // namespace testutil
