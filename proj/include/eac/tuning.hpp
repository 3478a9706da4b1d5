#pragma once

#include <vector>

#include "eac/adapters.hpp"
#include "eac/image_codec.hpp"
#include "eac/video_codec.hpp"

namespace eac {

// ---------------------------------------------------------------------------
// Stage-I predictor tuning: coordinate grid search over the sigma-topk keep
// fractions, layer by layer in order. Layer i is scored by its own
// rate-distortion objective: bits of the container prefix through layer i
// (header and side info included once) plus lambda times the task loss of the
// prefix reconstruction. A grid value is only accepted when it strictly
// improves on the incumbent, so the result is never worse than the initial
// configuration on the corpus.
// ---------------------------------------------------------------------------

struct Stage1Options {
  int n_layers = 2;
  double q = 8.0;
  double lambda = 1e-3;
  TaskKind task = TaskKind::kDownsample8;
  double grid_min = 0.05;
  double grid_max = 0.95;
  double grid_step = 0.05;
};

struct Stage1Result {
  PredictorConfig config;
  double initial_loss = 0.0;          // layer-1 objective of the initial config
  std::vector<double> layer_losses;   // tuned objective per layer 1..n-1
};

namespace detail {

inline double stage1_image_objective(const std::vector<PixelImage>& corpus,
                                     const PredictorConfig& pred,
                                     const Stage1Options& opt, int layer) {
  double sum = 0.0;
  for (const auto& img : corpus) {
    ImageEncodeConfig cfg;
    cfg.n_layers = opt.n_layers;
    cfg.q = opt.q;
    cfg.predictor = pred;
    const AdaptiveEncodeResult enc = encode_image(img, cfg);
    const double bits =
        static_cast<double>(enc.header.prefix_bytes(layer)) * 8.0;
    const PixelImage recon = decode_image(enc.bytes, layer);
    const double d =
        adapter_loss(task_head(recon, opt.task), task_head(img, opt.task));
    sum += rd_loss(bits, img.pixel_count(), d, opt.lambda);
  }
  return sum / static_cast<double>(corpus.size());
}

// Cumulative objective over one sequence for branch `layer`: per frame,
// bpp of the layer prefix of the motion and residual sections (the intra
// section's prefix rides in the motion slot) plus lambda times the task loss
// of the branch reconstruction.
inline double stage1_video_objective(
    const std::vector<std::vector<PixelImage>>& sequences,
    const PredictorConfig& pred, const Stage1Options& opt, int layer) {
  double sum = 0.0;
  for (const auto& seq : sequences) {
    VideoEncodeConfig cfg;
    cfg.n_layers = opt.n_layers;
    cfg.q = opt.q;
    cfg.intra_predictor = pred;
    cfg.motion_predictor = pred;
    cfg.residual_predictor = pred;
    const VideoEncodeResult enc = encode_video(seq, cfg);
    const VideoIndex index = read_video_index(enc.bytes);
    std::vector<FrameRd> frames;
    for (std::size_t t = 0; t < index.entries.size(); ++t) {
      const auto& entry = index.entries[t];
      FrameRd rd;
      auto section_prefix_bits = [&](std::size_t offset, std::size_t len) {
        const std::vector<uint8_t> sec(
            enc.bytes.begin() + static_cast<std::ptrdiff_t>(offset),
            enc.bytes.begin() + static_cast<std::ptrdiff_t>(offset + len));
        return static_cast<double>(read_container_header(sec).prefix_bytes(layer)) *
               8.0;
      };
      rd.motion_bits = section_prefix_bits(entry.offset, entry.bytes_a);
      if (!entry.intra) {
        rd.residual_bits =
            section_prefix_bits(entry.offset + entry.bytes_a, entry.bytes_b);
      }
      rd.distortion = adapter_loss(
          task_head(enc.branch_frames[static_cast<std::size_t>(layer - 1)][t],
                    opt.task),
          task_head(seq[t], opt.task));
      frames.push_back(rd);
    }
    sum += cumulative_rd_loss(frames, opt.lambda, seq.front().pixel_count());
  }
  return sum / static_cast<double>(sequences.size());
}

template <typename Objective>
Stage1Result stage1_search(const PredictorConfig& initial,
                           const Stage1Options& opt, Objective&& objective) {
  if (initial.kind != PredictorKind::kSigmaTopK) {
    throw InvalidInput("tune_stage1: derivative-free tuning needs sigma-topk");
  }
  initial.validate(opt.n_layers);

  Stage1Result result;
  result.config = initial;
  result.initial_loss = opt.n_layers > 1 ? objective(initial, 1) : 0.0;

  for (int layer = 1; layer < opt.n_layers; ++layer) {
    double best_loss = objective(result.config, layer);
    for (double keep = opt.grid_min; keep <= opt.grid_max + 1e-9;
         keep += opt.grid_step) {
      PredictorConfig cand = result.config;
      cand.keep[static_cast<std::size_t>(layer - 1)] =
          KeepFraction::from_double(keep);
      uint64_t total = 0;
      for (int i = 0; i < opt.n_layers - 1; ++i) {
        total += cand.keep[static_cast<std::size_t>(i)].units;
      }
      if (total > kKeepOne) continue;
      const double loss = objective(cand, layer);
      if (loss < best_loss) {
        best_loss = loss;
        result.config = cand;
      }
    }
    result.layer_losses.push_back(best_loss);
  }
  return result;
}

}  // namespace detail

inline Stage1Result tune_stage1(const std::vector<PixelImage>& corpus,
                                const PredictorConfig& initial,
                                const Stage1Options& opt) {
  if (corpus.empty()) throw InvalidInput("tune_stage1: empty corpus");
  return detail::stage1_search(initial, opt, [&](const PredictorConfig& cfg, int layer) {
    return detail::stage1_image_objective(corpus, cfg, opt, layer);
  });
}

inline Stage1Result tune_stage1_video(
    const std::vector<std::vector<PixelImage>>& sequences,
    const PredictorConfig& initial, const Stage1Options& opt) {
  if (sequences.empty()) throw InvalidInput("tune_stage1: empty corpus");
  for (const auto& seq : sequences) {
    if (seq.empty()) throw InvalidInput("tune_stage1: empty sequence in corpus");
  }
  return detail::stage1_search(initial, opt, [&](const PredictorConfig& cfg, int layer) {
    return detail::stage1_video_objective(sequences, cfg, opt, layer);
  });
}

}  // namespace eac
