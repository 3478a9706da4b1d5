#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "eac/bytes.hpp"
#include "eac/conv.hpp"
#include "eac/errors.hpp"
#include "eac/image.hpp"
#include "eac/partition.hpp"
#include "eac/rng.hpp"
#include "eac/tensor.hpp"

namespace eac {

// ---------------------------------------------------------------------------
// Task-specific adapters and toy task heads. The adapter is a small residual
// network added in front of a frozen task head: the head consumes
// clamp(x + f(x)) instead of x, and only the adapter's few parameters are
// tuned. The video variant folds three reference frames into the feature
// path. Heads are fixed operators standing in for full task networks.
// ---------------------------------------------------------------------------

inline constexpr int kAdapterWidth = 8;

struct AdapterWeights {
  uint8_t mode = 0;        // 0 image, 1 video
  int image_channels = 1;
  Conv3x3 proj;       // channels -> width
  Conv3x3 ref_proj;   // 3*channels -> width (video only)
  Conv3x3 rb1, rb2;   // width -> width residual block
  Conv3x3 out_proj;   // width -> channels, back to pixel space

  static AdapterWeights zeros(uint8_t mode, int channels) {
    AdapterWeights w;
    w.mode = mode;
    w.image_channels = channels;
    w.proj = Conv3x3(channels, kAdapterWidth);
    if (mode == 1) w.ref_proj = Conv3x3(3 * channels, kAdapterWidth);
    w.rb1 = Conv3x3(kAdapterWidth, kAdapterWidth);
    w.rb2 = Conv3x3(kAdapterWidth, kAdapterWidth);
    w.out_proj = Conv3x3(kAdapterWidth, channels);
    return w;
  }

  static AdapterWeights random(uint8_t mode, int channels, Rng& rng,
                               double scale = 0.01) {
    AdapterWeights w = zeros(mode, channels);
    for (auto* conv : {&w.proj, &w.ref_proj, &w.rb1, &w.rb2, &w.out_proj}) {
      for (double& v : conv->weights) v = rng.next_gaussian() * scale;
      for (double& v : conv->bias) v = rng.next_gaussian() * scale;
    }
    return w;
  }

  void validate() const {
    if (mode > 1) throw InvalidWeights("adapter: bad mode byte");
    if (image_channels != 1 && image_channels != 3) {
      throw InvalidWeights("adapter: channels must be 1 or 3");
    }
    if (proj.in_channels != image_channels || proj.out_channels != kAdapterWidth ||
        rb1.in_channels != kAdapterWidth || rb1.out_channels != kAdapterWidth ||
        rb2.in_channels != kAdapterWidth || rb2.out_channels != kAdapterWidth ||
        out_proj.in_channels != kAdapterWidth ||
        out_proj.out_channels != image_channels) {
      throw InvalidWeights("adapter: conv shapes do not match declared mode");
    }
    if (mode == 1 && (ref_proj.in_channels != 3 * image_channels ||
                      ref_proj.out_channels != kAdapterWidth)) {
      throw InvalidWeights("adapter: reference conv shape mismatch");
    }
    proj.check_shape();
    if (mode == 1) ref_proj.check_shape();
    rb1.check_shape();
    rb2.check_shape();
    out_proj.check_shape();
  }

  std::size_t param_count() const {
    std::size_t n = proj.param_count() + rb1.param_count() + rb2.param_count() +
                    out_proj.param_count();
    if (mode == 1) n += ref_proj.param_count();
    return n;
  }

  // Flat parameter view for the derivative-free tuner; order is fixed.
  std::vector<double> to_vector() const {
    std::vector<double> flat;
    auto append = [&](const Conv3x3& c) {
      flat.insert(flat.end(), c.weights.begin(), c.weights.end());
      flat.insert(flat.end(), c.bias.begin(), c.bias.end());
    };
    append(proj);
    if (mode == 1) append(ref_proj);
    append(rb1);
    append(rb2);
    append(out_proj);
    return flat;
  }

  void from_vector(const std::vector<double>& flat) {
    std::size_t pos = 0;
    auto take = [&](Conv3x3& c) {
      for (double& v : c.weights) v = flat[pos++];
      for (double& v : c.bias) v = flat[pos++];
    };
    take(proj);
    if (mode == 1) take(ref_proj);
    take(rb1);
    take(rb2);
    take(out_proj);
    if (pos != flat.size()) throw InvalidWeights("adapter: flat size mismatch");
  }
};

// Shape arithmetic for reporting; a zero-channel or zero-width configuration
// is an empty adapter.
inline std::size_t adapter_param_count(uint8_t mode, int channels,
                                       int width = kAdapterWidth) {
  if (channels <= 0 || width <= 0) return 0;
  const auto ch = static_cast<std::size_t>(channels);
  const auto wd = static_cast<std::size_t>(width);
  auto conv_params = [](std::size_t in, std::size_t out) {
    return in * out * 9 + out;
  };
  std::size_t n = conv_params(ch, wd) + 2 * conv_params(wd, wd) +
                  conv_params(wd, ch);
  if (mode == 1) n += conv_params(3 * ch, wd);
  return n;
}

namespace detail {

inline RealGrid image_to_grid(const PixelImage& img) {
  RealGrid g(Dims{img.channels, img.height, img.width});
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) g.at(c, y, x) = img.at(x, y, c);
    }
  }
  return g;
}

inline RealGrid adapter_core(const AdapterWeights& w, const RealGrid& feat) {
  // residual block then projection back to pixel space
  const RealGrid rb = w.rb2.apply(leaky_relu(w.rb1.apply(feat)));
  RealGrid merged = feat;
  for (std::size_t i = 0; i < merged.values.size(); ++i) {
    merged.values[i] += rb.values[i];
  }
  return w.out_proj.apply(merged);
}

}  // namespace detail

// f(x) for the image adapter, pre-clamp and real-valued (exactly zero for
// zero weights).
inline RealGrid adapter_residual_image(const PixelImage& xhat,
                                       const AdapterWeights& w) {
  w.validate();
  if (w.mode != 0) throw InvalidWeights("adapter: video weights on image path");
  if (xhat.channels != w.image_channels) {
    throw InvalidWeights("adapter: channel mismatch");
  }
  return detail::adapter_core(w, w.proj.apply(detail::image_to_grid(xhat)));
}

// f(x, [ref1, ref2, ref3]) for the video adapter; the three references are
// concatenated channel-wise and folded into the feature path.
inline RealGrid adapter_residual_video(
    const PixelImage& xhat, const std::array<const PixelImage*, 3>& refs,
    const AdapterWeights& w) {
  w.validate();
  if (w.mode != 1) throw InvalidWeights("adapter: image weights on video path");
  if (xhat.channels != w.image_channels) {
    throw InvalidWeights("adapter: channel mismatch");
  }
  RealGrid cat(Dims{3 * xhat.channels, xhat.height, xhat.width});
  for (int k = 0; k < 3; ++k) {
    const PixelImage& ref = *refs[static_cast<std::size_t>(k)];
    if (!ref.same_shape(xhat)) throw InvalidInput("adapter: reference dims mismatch");
    for (int c = 0; c < xhat.channels; ++c) {
      for (int y = 0; y < xhat.height; ++y) {
        for (int x = 0; x < xhat.width; ++x) {
          cat.at(k * xhat.channels + c, y, x) = ref.at(x, y, c);
        }
      }
    }
  }
  RealGrid feat = w.proj.apply(detail::image_to_grid(xhat));
  const RealGrid ref_feat = w.ref_proj.apply(cat);
  for (std::size_t i = 0; i < feat.values.size(); ++i) {
    feat.values[i] += ref_feat.values[i];
  }
  return detail::adapter_core(w, feat);
}

inline PixelImage apply_residual(const PixelImage& xhat, const RealGrid& res) {
  PixelImage out(xhat.width, xhat.height, xhat.channels);
  for (int c = 0; c < xhat.channels; ++c) {
    for (int y = 0; y < xhat.height; ++y) {
      for (int x = 0; x < xhat.width; ++x) {
        const int v = round_half_away(xhat.at(x, y, c) + res.at(c, y, x));
        out.at(x, y, c) = static_cast<uint8_t>(std::clamp(v, 0, 255));
      }
    }
  }
  return out;
}

// clamp(x + f(x)); zero weights make this the identity.
inline PixelImage adapt_image(const PixelImage& xhat, const AdapterWeights& w) {
  return apply_residual(xhat, adapter_residual_image(xhat, w));
}

inline PixelImage adapt_video(const PixelImage& xhat,
                              const std::array<const PixelImage*, 3>& refs,
                              const AdapterWeights& w) {
  return apply_residual(xhat, adapter_residual_video(xhat, refs, w));
}

// ---------------------------------------------------------------------------
// Toy task heads (fixed, frozen). Task A: 8x-downsampled grayscale map.
// Task B: Sobel edge-energy map. Distance is MSE in both cases.
// ---------------------------------------------------------------------------

enum class TaskKind : uint8_t {
  kDownsample8 = 0,  // "task A"
  kSobelEnergy = 1,  // "task B"
};

inline RealGrid task_head(const PixelImage& img, TaskKind kind) {
  if (kind == TaskKind::kDownsample8) {
    const int gh = (img.height + 7) / 8;
    const int gw = (img.width + 7) / 8;
    RealGrid out(Dims{1, gh, gw});
    for (int by = 0; by < gh; ++by) {
      for (int bx = 0; bx < gw; ++bx) {
        const int y0 = by * 8, y1 = std::min(y0 + 8, img.height);
        const int x0 = bx * 8, x1 = std::min(x0 + 8, img.width);
        double sum = 0.0;
        for (int y = y0; y < y1; ++y) {
          for (int x = x0; x < x1; ++x) sum += luma(img, x, y);
        }
        out.at(0, by, bx) = sum / ((y1 - y0) * (x1 - x0));
      }
    }
    return out;
  }
  // Sobel energy gx^2 + gy^2 on luma, edge-replicated borders.
  RealGrid out(Dims{1, img.height, img.width});
  auto g = [&](int x, int y) {
    x = std::clamp(x, 0, img.width - 1);
    y = std::clamp(y, 0, img.height - 1);
    return luma(img, x, y);
  };
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double gx = -g(x - 1, y - 1) + g(x + 1, y - 1) - 2 * g(x - 1, y) +
                        2 * g(x + 1, y) - g(x - 1, y + 1) + g(x + 1, y + 1);
      const double gy = -g(x - 1, y - 1) - 2 * g(x, y - 1) - g(x + 1, y - 1) +
                        g(x - 1, y + 1) + 2 * g(x, y + 1) + g(x + 1, y + 1);
      out.at(0, y, x) = gx * gx + gy * gy;
    }
  }
  return out;
}

// Number of fixed coefficients in a head: the 8x8 averaging kernel for task A,
// the two 3x3 Sobel kernels for task B.
inline std::size_t head_param_count(TaskKind kind) {
  return kind == TaskKind::kDownsample8 ? 64 : 18;
}

// MSE with compensated summation so the evaluator is reproducible to full
// double precision.
inline double adapter_loss(const RealGrid& prediction, const RealGrid& target) {
  if (!(prediction.dims == target.dims)) {
    throw InvalidInput("adapter_loss: dims mismatch");
  }
  double sum = 0.0, comp = 0.0;
  for (std::size_t i = 0; i < prediction.values.size(); ++i) {
    const double d = prediction.values[i] - target.values[i];
    const double term = d * d - comp;
    const double next = sum + term;
    comp = (next - sum) - term;
    sum = next;
  }
  return sum / static_cast<double>(prediction.values.size());
}

// ---------------------------------------------------------------------------
// Rate-distortion objectives.
// ---------------------------------------------------------------------------

inline double rd_loss(double rate_bits, std::size_t pixels, double distortion,
                      double lambda) {
  if (pixels == 0) throw InvalidInput("rd_loss: zero pixels");
  return rate_bits / static_cast<double>(pixels) + lambda * distortion;
}

struct FrameRd {
  double motion_bits = 0.0;
  double residual_bits = 0.0;
  double distortion = 0.0;
};

// Mean over T frames of bpp(motion) + bpp(residual) + lambda * distortion.
inline double cumulative_rd_loss(const std::vector<FrameRd>& frames,
                                 double lambda, std::size_t pixels) {
  if (frames.empty()) throw InvalidInput("cumulative_rd_loss: no frames");
  if (pixels == 0) throw InvalidInput("cumulative_rd_loss: zero pixels");
  double sum = 0.0;
  for (const auto& f : frames) {
    sum += (f.motion_bits + f.residual_bits) / static_cast<double>(pixels) +
           lambda * f.distortion;
  }
  return sum / static_cast<double>(frames.size());
}

// ---------------------------------------------------------------------------
// Stage-II adapter tuning: derivative-free coordinate search with step
// halving and an evaluation budget. Only strictly improving moves are
// accepted, so the best-seen loss is monotone non-increasing and the result
// is never worse than the initial weights.
// ---------------------------------------------------------------------------

struct Stage2Options {
  int budget = 200;            // corpus evaluations spent on perturbations
  double initial_step = 0.05;
  double min_step = 1e-6;
};

struct Stage2Result {
  AdapterWeights weights;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int evaluations = 0;
};

inline Stage2Result tune_stage2(
    const std::function<double(const AdapterWeights&)>& corpus_loss,
    const AdapterWeights& initial, const Stage2Options& opt = {}) {
  initial.validate();
  Stage2Result result;
  result.weights = initial;
  result.initial_loss = corpus_loss(initial);
  result.final_loss = result.initial_loss;

  std::vector<double> best = initial.to_vector();
  AdapterWeights probe = initial;
  double step = opt.initial_step;
  int evals = 0;

  while (evals < opt.budget && step >= opt.min_step) {
    bool improved_this_pass = false;
    for (std::size_t i = 0; i < best.size() && evals < opt.budget; ++i) {
      for (const double delta : {step, -step}) {
        if (evals >= opt.budget) break;
        std::vector<double> cand = best;
        cand[i] += delta;
        probe.from_vector(cand);
        const double loss = corpus_loss(probe);
        ++evals;
        if (loss < result.final_loss) {
          result.final_loss = loss;
          best = std::move(cand);
          improved_this_pass = true;
          break;  // keep the sign that worked, move to the next coordinate
        }
      }
    }
    if (!improved_this_pass) step *= 0.5;
  }
  result.weights.from_vector(best);
  result.evaluations = evals;
  return result;
}

// Convenience wrapper over an image corpus of (reconstruction, target) pairs.
inline Stage2Result tune_stage2_image(
    const std::vector<std::pair<PixelImage, RealGrid>>& corpus, TaskKind task,
    const AdapterWeights& initial, const Stage2Options& opt = {}) {
  if (corpus.empty()) throw InvalidInput("tune_stage2: empty corpus");
  auto loss = [&](const AdapterWeights& w) {
    double sum = 0.0;
    for (const auto& [xhat, target] : corpus) {
      sum += adapter_loss(task_head(adapt_image(xhat, w), task), target);
    }
    return sum / static_cast<double>(corpus.size());
  };
  return tune_stage2(loss, initial, opt);
}

// ---------------------------------------------------------------------------
// EACW serialization (same envelope as predictor weights, modes 2/3).
// Convolution order: proj, [ref_proj if video], rb1, rb2, out_proj.
// ---------------------------------------------------------------------------

inline std::vector<uint8_t> serialize_adapter_weights(const AdapterWeights& w) {
  w.validate();
  ByteWriter out;
  out.tag("EACW");
  out.u8(1);
  out.u8(w.mode == 0 ? kWeightsAdapterImage : kWeightsAdapterVideo);
  out.u16(static_cast<uint16_t>(w.image_channels));
  out.u8(w.mode == 1 ? 3 : 0);  // reference count
  detail::write_conv(out, w.proj);
  if (w.mode == 1) detail::write_conv(out, w.ref_proj);
  detail::write_conv(out, w.rb1);
  detail::write_conv(out, w.rb2);
  detail::write_conv(out, w.out_proj);
  return out.take();
}

inline AdapterWeights deserialize_adapter_weights(const std::vector<uint8_t>& bytes) {
  ByteReader in(bytes);
  in.expect_tag("EACW", "weights file");
  if (in.u8() != 1) throw FormatError("weights file: unsupported version");
  const uint8_t mode_byte = in.u8();
  if (mode_byte != kWeightsAdapterImage && mode_byte != kWeightsAdapterVideo) {
    throw FormatError("weights file: not an adapter weight file");
  }
  const int channels = in.u16();
  const uint8_t refs = in.u8();
  const uint8_t mode = mode_byte == kWeightsAdapterVideo ? 1 : 0;
  if ((mode == 1 && refs != 3) || (mode == 0 && refs != 0)) {
    throw FormatError("weights file: bad reference count");
  }
  AdapterWeights w = AdapterWeights::zeros(mode, channels);
  detail::read_conv(in, w.proj);
  if (mode == 1) detail::read_conv(in, w.ref_proj);
  detail::read_conv(in, w.rb1);
  detail::read_conv(in, w.rb2);
  detail::read_conv(in, w.out_proj);
  if (in.remaining() != 0) throw FormatError("weights file: trailing bytes");
  w.validate();
  return w;
}

}  // namespace eac
