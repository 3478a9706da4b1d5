#pragma once

#include <cmath>
#include <cstdio>
#include <future>
#include <sstream>
#include <string>
#include <vector>

#include "eac/adapters.hpp"
#include "eac/adaptive_codec.hpp"
#include "eac/image_codec.hpp"

namespace eac {

inline constexpr double kPsnrCap = 100.0;

// 10*log10(255^2 / MSE), capped at 100 dB (identical images report the cap).
inline double psnr(const PixelImage& a, const PixelImage& b) {
  if (!a.same_shape(b)) throw InvalidInput("psnr: dims mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const double d = static_cast<double>(a.samples[i]) - b.samples[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.samples.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

inline double bpp(std::size_t bytes, std::size_t pixels) {
  if (pixels == 0) throw InvalidInput("bpp: zero pixels");
  return static_cast<double>(bytes) * 8.0 / static_cast<double>(pixels);
}

// Channel-max projection of a layer mask at latent resolution: white where
// any channel keeps the element.
inline PixelImage mask_projection(const LayerMask& mask) {
  PixelImage img(mask.dims.width, mask.dims.height, 1);
  for (int c = 0; c < mask.dims.channels; ++c) {
    for (int h = 0; h < mask.dims.height; ++h) {
      for (int w = 0; w < mask.dims.width; ++w) {
        if (mask.bits[flatten_index(c, h, w, mask.dims)]) img.at(w, h, 0) = 255;
      }
    }
  }
  return img;
}

// Re-derives the masks of a coded stream from its side info, exactly the way
// a decoder would (conv streams need the weights, video streams the temporal
// source handled by the caller).
inline MaskSet derive_masks(const std::vector<uint8_t>& container_bytes,
                            const ConvPredictorWeights* weights = nullptr,
                            const std::optional<RealGrid>& temporal = std::nullopt) {
  const AdaptiveDecodeResult dec =
      decode_latent_adaptive(container_bytes, 0, weights, temporal);
  return dec.masks;
}

// ---------------------------------------------------------------------------
// Rate-distortion sweep: one row per (q, lambda, layer prefix) plus a human
// row per configuration, averaged over the corpus. Rows are emitted in a
// fixed order and with fixed formatting so reruns are byte-identical.
// ---------------------------------------------------------------------------

struct RdSweepRow {
  double q = 0.0;
  double lambda = 0.0;
  std::string layer;  // "1".."n" or "human"
  double bpp = 0.0;
  double psnr_db = 0.0;
  double task_loss = 0.0;
};

inline std::vector<RdSweepRow> rd_sweep(const std::vector<PixelImage>& corpus,
                                        const std::vector<double>& qs,
                                        const std::vector<double>& lambdas,
                                        int n_layers, TaskKind task,
                                        const PredictorConfig& predictor,
                                        int jobs = 1) {
  if (corpus.empty()) throw InvalidInput("rd_sweep: empty corpus");
  if (qs.empty() || lambdas.empty()) throw InvalidInput("rd_sweep: empty grid");

  struct Config {
    double q, lambda;
  };
  std::vector<Config> grid;
  for (double q : qs) {
    for (double lambda : lambdas) grid.push_back({q, lambda});
  }

  auto eval_config = [&](const Config& cfg) {
    std::vector<RdSweepRow> rows(static_cast<std::size_t>(n_layers) + 1);
    for (int i = 0; i <= n_layers; ++i) {
      rows[static_cast<std::size_t>(i)].q = cfg.q;
      rows[static_cast<std::size_t>(i)].lambda = cfg.lambda;
      rows[static_cast<std::size_t>(i)].layer =
          i < n_layers ? std::to_string(i + 1) : "human";
    }
    for (const auto& img : corpus) {
      ImageEncodeConfig ecfg;
      ecfg.n_layers = n_layers;
      ecfg.q = cfg.q;
      ecfg.predictor = predictor;
      const AdaptiveEncodeResult enc = encode_image(img, ecfg);
      const RealGrid target = task_head(img, task);
      const ConvPredictorWeights* w =
          predictor.kind == PredictorKind::kConvGumbel ? predictor.weights.get()
                                                       : nullptr;
      for (int i = 1; i <= n_layers; ++i) {
        const PixelImage recon = decode_image(enc.bytes, i, w);
        const double layer_bpp =
            bpp(enc.header.prefix_bytes(i), img.pixel_count());
        const double layer_psnr = psnr(recon, img);
        const double loss = adapter_loss(task_head(recon, task), target);
        auto& machine_row = rows[static_cast<std::size_t>(i - 1)];
        machine_row.bpp += layer_bpp;
        machine_row.psnr_db += layer_psnr;
        machine_row.task_loss += loss;
        if (i == n_layers) {
          auto& human_row = rows.back();
          human_row.bpp += bpp(enc.header.total_bytes(), img.pixel_count());
          human_row.psnr_db += layer_psnr;
          human_row.task_loss += loss;
        }
      }
    }
    for (auto& row : rows) {
      row.bpp /= static_cast<double>(corpus.size());
      row.psnr_db /= static_cast<double>(corpus.size());
      row.task_loss /= static_cast<double>(corpus.size());
    }
    return rows;
  };

  std::vector<std::vector<RdSweepRow>> per_config(grid.size());
  if (jobs <= 1) {
    for (std::size_t i = 0; i < grid.size(); ++i) per_config[i] = eval_config(grid[i]);
  } else {
    std::vector<std::future<std::vector<RdSweepRow>>> futures;
    futures.reserve(grid.size());
    for (const auto& cfg : grid) {
      futures.push_back(std::async(std::launch::async, eval_config, cfg));
    }
    for (std::size_t i = 0; i < grid.size(); ++i) per_config[i] = futures[i].get();
  }

  std::vector<RdSweepRow> rows;
  for (auto& config_rows : per_config) {
    for (auto& row : config_rows) rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string rd_sweep_csv(const std::vector<RdSweepRow>& rows) {
  std::string out = "q,lambda,layer,bpp,psnr,task_loss\n";
  char line[160];
  for (const auto& row : rows) {
    std::snprintf(line, sizeof(line), "%.4f,%.6f,%s,%.6f,%.4f,%.6f\n", row.q,
                  row.lambda, row.layer.c_str(), row.bpp, row.psnr_db,
                  row.task_loss);
    out += line;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameter accounting for the delta-tuning story: exact adapter and head
// counts plus the reference ratio that motivates tuning the adapter instead
// of the task network.
// ---------------------------------------------------------------------------

struct ParamReport {
  std::size_t adapter_params = 0;
  std::size_t head_params = 0;
  double ratio = 0.0;
  std::string text;
};

inline ParamReport param_count_report(uint8_t adapter_mode, int channels,
                                      TaskKind head,
                                      int width = kAdapterWidth) {
  ParamReport report;
  report.adapter_params = adapter_param_count(adapter_mode, channels, width);
  report.head_params = head_param_count(head);
  report.ratio = report.head_params == 0
                     ? 0.0
                     : static_cast<double>(report.adapter_params) /
                           static_cast<double>(report.head_params);
  std::ostringstream text;
  text << "adapter (" << (adapter_mode == 1 ? "video" : "image") << ", "
       << channels << " ch, width " << width
       << "): " << report.adapter_params << " parameters\n"
       << "task head ("
       << (head == TaskKind::kDownsample8 ? "8x-downsample" : "sobel-energy")
       << "): " << report.head_params << " fixed coefficients\n"
       << "adapter/head ratio: " << report.ratio << "\n"
       << "reference scale: a production-grade adapter runs about 0.17 M "
          "parameters against a 25.56 M-parameter ResNet50 backbone "
          "(~0.67%), which is the ratio this accounting mirrors.\n";
  report.text = text.str();
  return report;
}

}  // namespace eac
