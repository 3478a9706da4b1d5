#pragma once

#include <array>
#include <cstdlib>
#include <optional>
#include <vector>

#include "eac/adaptive_codec.hpp"
#include "eac/image_codec.hpp"
#include "eac/partition.hpp"

namespace eac {

// ---------------------------------------------------------------------------
// Motion-compensated path: block-matching motion estimation, adaptive motion
// compression, per-branch compensation, adaptive residual compression, and a
// per-branch frame buffer. Branch i (1-based) reconstructs from the layer-i
// prefixes of both the motion and residual sections; branch n is the human
// path (covering makes its prefix the full latent). The encoder reconstructs
// every branch through the same decode functions the decoder runs, so the two
// sides agree bit for bit on every frame.
// ---------------------------------------------------------------------------

inline constexpr int kMotionBlock = 8;
inline constexpr int kMotionRadius = 8;
inline constexpr int kFrameBufferCap = 3;

struct MotionField {
  int grid_h = 0;
  int grid_w = 0;
  std::vector<int8_t> dx;
  std::vector<int8_t> dy;

  MotionField() = default;
  MotionField(int gh, int gw)
      : grid_h(gh), grid_w(gw),
        dx(static_cast<std::size_t>(gh) * gw, 0),
        dy(static_cast<std::size_t>(gh) * gw, 0) {}

  std::size_t block_index(int by, int bx) const {
    return static_cast<std::size_t>(by) * grid_w + bx;
  }
};

// Exhaustive SAD search over displacements within the radius, all channels.
// Ties resolve to the smallest |dx|+|dy|, then the smallest dy, then the
// smallest dx, so the field is identical on every platform.
inline MotionField motion_estimate(const PixelImage& cur, const PixelImage& ref) {
  if (!cur.same_shape(ref)) throw InvalidInput("motion_estimate: dims mismatch");
  const int h = cur.height, w = cur.width, ch = cur.channels;
  const int gh = (h + kMotionBlock - 1) / kMotionBlock;
  const int gw = (w + kMotionBlock - 1) / kMotionBlock;
  MotionField field(gh, gw);
  auto ref_at = [&](int x, int y, int c) {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return static_cast<int>(ref.at(x, y, c));
  };
  for (int by = 0; by < gh; ++by) {
    for (int bx = 0; bx < gw; ++bx) {
      const int y0 = by * kMotionBlock, y1 = std::min(y0 + kMotionBlock, h);
      const int x0 = bx * kMotionBlock, x1 = std::min(x0 + kMotionBlock, w);
      long best_sad = -1;
      int best_dx = 0, best_dy = 0;
      for (int dy = -kMotionRadius; dy <= kMotionRadius; ++dy) {
        for (int dx = -kMotionRadius; dx <= kMotionRadius; ++dx) {
          long sad = 0;
          for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
              for (int c = 0; c < ch; ++c) {
                sad += std::abs(static_cast<int>(cur.at(x, y, c)) -
                                ref_at(x + dx, y + dy, c));
              }
            }
          }
          const bool better =
              best_sad < 0 || sad < best_sad ||
              (sad == best_sad &&
               (std::abs(dx) + std::abs(dy) < std::abs(best_dx) + std::abs(best_dy) ||
                (std::abs(dx) + std::abs(dy) == std::abs(best_dx) + std::abs(best_dy) &&
                 (dy < best_dy || (dy == best_dy && dx < best_dx)))));
          if (better) {
            best_sad = sad;
            best_dx = dx;
            best_dy = dy;
          }
        }
      }
      field.dx[field.block_index(by, bx)] = static_cast<int8_t>(best_dx);
      field.dy[field.block_index(by, bx)] = static_cast<int8_t>(best_dy);
    }
  }
  return field;
}

// Each block copied from the reference at its displaced location with sample
// fetches clamped to the frame, so no read ever leaves bounds.
inline PixelImage motion_compensate(const PixelImage& ref, const MotionField& field) {
  const int h = ref.height, w = ref.width, ch = ref.channels;
  if (field.grid_h != (h + kMotionBlock - 1) / kMotionBlock ||
      field.grid_w != (w + kMotionBlock - 1) / kMotionBlock) {
    throw InvalidInput("motion_compensate: field grid does not match frame");
  }
  PixelImage out(w, h, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t b = field.block_index(y / kMotionBlock, x / kMotionBlock);
      const int sx = std::clamp(x + field.dx[b], 0, w - 1);
      const int sy = std::clamp(y + field.dy[b], 0, h - 1);
      for (int c = 0; c < ch; ++c) out.at(x, y, c) = ref.at(sx, sy, c);
    }
  }
  return out;
}

// The motion field as a 2-channel integer latent (dx, dy per block).
inline LatentTensor motion_to_latent(const MotionField& field) {
  LatentTensor latent(Dims{2, field.grid_h, field.grid_w});
  for (int by = 0; by < field.grid_h; ++by) {
    for (int bx = 0; bx < field.grid_w; ++bx) {
      latent.at(0, by, bx) = field.dx[field.block_index(by, bx)];
      latent.at(1, by, bx) = field.dy[field.block_index(by, bx)];
    }
  }
  return latent;
}

// Mean-filled prefixes are real-valued; displacements round back to integers
// within the search radius.
inline MotionField motion_from_grid(const RealGrid& grid) {
  if (grid.dims.channels != 2) {
    throw InvalidInput("motion_from_grid: expected a 2-channel grid");
  }
  MotionField field(grid.dims.height, grid.dims.width);
  for (int by = 0; by < grid.dims.height; ++by) {
    for (int bx = 0; bx < grid.dims.width; ++bx) {
      field.dx[field.block_index(by, bx)] = static_cast<int8_t>(
          std::clamp(round_half_away(grid.at(0, by, bx)), -kMotionRadius, kMotionRadius));
      field.dy[field.block_index(by, bx)] = static_cast<int8_t>(
          std::clamp(round_half_away(grid.at(1, by, bx)), -kMotionRadius, kMotionRadius));
    }
  }
  return field;
}

// Per-branch reference store; machine branches and the human path never mix.
struct FrameBuffer {
  std::vector<PixelImage> frames;  // newest last

  void push(PixelImage f) {
    frames.push_back(std::move(f));
    if (frames.size() > kFrameBufferCap) frames.erase(frames.begin());
  }
  bool empty() const { return frames.empty(); }
  const PixelImage& last() const { return frames.back(); }

  // Three references, newest first; the oldest repeats while the buffer is
  // still filling at the start of a sequence.
  std::array<const PixelImage*, kFrameBufferCap> refs() const {
    if (frames.empty()) throw DecodeOrderError("frame buffer is empty");
    std::array<const PixelImage*, kFrameBufferCap> out{};
    for (int k = 0; k < kFrameBufferCap; ++k) {
      const int idx = std::max(0, static_cast<int>(frames.size()) - 1 - k);
      out[static_cast<std::size_t>(k)] = &frames[static_cast<std::size_t>(idx)];
    }
    return out;
  }
};

namespace detail {

inline RealGrid residual_to_grid(const PixelImage& cur, const PixelImage& pred,
                                 bool* halved_out) {
  RealGrid res(Dims{cur.channels, cur.height, cur.width});
  int max_abs = 0;
  for (int c = 0; c < cur.channels; ++c) {
    for (int y = 0; y < cur.height; ++y) {
      for (int x = 0; x < cur.width; ++x) {
        const int r = static_cast<int>(cur.at(x, y, c)) - pred.at(x, y, c);
        res.at(c, y, x) = r;
        max_abs = std::max(max_abs, std::abs(r));
      }
    }
  }
  const bool halved = max_abs > kValueMax;
  if (halved) {
    for (double& v : res.values) {
      v = std::clamp(round_half_away(v * 0.5), kValueMin, kValueMax);
    }
  }
  *halved_out = halved;
  return res;
}

// Temporal predictor input shared by the motion and residual stacks; the
// ablation switch zeroes the features without changing their shape.
inline RealGrid temporal_or_zero(const PixelImage& prev1, int grid_h, int grid_w,
                                 bool ablation) {
  if (ablation) return RealGrid(Dims{kTemporalChannels, grid_h, grid_w});
  return temporal_features(prev1, grid_h, grid_w);
}

}  // namespace detail

// Decodes one inter frame for one branch from its motion/residual sections.
// ref is the branch's own previous reconstruction; prev1 is machine branch 1's
// previous reconstruction, the shared temporal-feature source every prefix
// can re-derive.
inline PixelImage decode_inter_frame(const std::vector<uint8_t>& motion_bytes,
                                     const std::vector<uint8_t>& residual_bytes,
                                     int branch, const PixelImage& ref,
                                     const PixelImage& prev1,
                                     const ConvPredictorWeights* motion_weights = nullptr,
                                     const ConvPredictorWeights* residual_weights = nullptr) {
  const ContainerHeader mh = read_container_header(motion_bytes);
  if (mh.mode != ContainerMode::kVideoMotion) {
    throw FormatError("decode_inter_frame: first section is not a motion stream");
  }
  const bool ablation = (mh.flags & kFlagTemporalAblation) != 0;
  const std::optional<RealGrid> temporal = detail::temporal_or_zero(
      prev1, mh.latent.height, mh.latent.width, ablation);

  const AdaptiveDecodeResult mdec =
      decode_latent_adaptive(motion_bytes, branch, motion_weights, temporal);
  const MotionField motion = motion_from_grid(mdec.aggregated);
  const PixelImage pred = motion_compensate(ref, motion);

  const AdaptiveDecodeResult rdec =
      decode_latent_adaptive(residual_bytes, branch, residual_weights, temporal);
  if (rdec.header.mode != ContainerMode::kVideoResidual) {
    throw FormatError("decode_inter_frame: second section is not a residual stream");
  }
  const RealGrid res = dct_synthesis(rdec.aggregated, rdec.header.q(),
                                     rdec.header.orig_height,
                                     rdec.header.orig_width);
  const double scale = (rdec.header.flags & kFlagResidualHalved) ? 2.0 : 1.0;
  if (res.dims.channels != pred.channels || res.dims.height != pred.height ||
      res.dims.width != pred.width) {
    throw FormatError("decode_inter_frame: residual dims do not match frame");
  }
  PixelImage recon(pred.width, pred.height, pred.channels);
  for (int c = 0; c < pred.channels; ++c) {
    for (int y = 0; y < pred.height; ++y) {
      for (int x = 0; x < pred.width; ++x) {
        const int v = pred.at(x, y, c) + round_half_away(scale * res.at(c, y, x));
        recon.at(x, y, c) = static_cast<uint8_t>(std::clamp(v, 0, 255));
      }
    }
  }
  return recon;
}

struct VideoEncodeConfig {
  int n_layers = 1;
  double q = 8.0;
  int gop = 0;  // 0: single leading intra frame, otherwise intra every gop frames
  PredictorConfig intra_predictor;
  PredictorConfig motion_predictor;
  PredictorConfig residual_predictor;
  bool temporal_ablation = false;
};

struct FrameSectionInfo {
  bool intra = false;
  uint32_t bytes_a = 0;  // intra section, or motion section
  uint32_t bytes_b = 0;  // residual section (0 for intra frames)
};

struct VideoEncodeResult {
  std::vector<uint8_t> bytes;
  std::vector<FrameSectionInfo> frames;
  // Encoder-side reconstructions, [branch 1..n][frame]; branch n is the human
  // path. The decoder must reproduce these byte-identically.
  std::vector<std::vector<PixelImage>> branch_frames;
};

namespace detail {

inline const ConvPredictorWeights* conv_weights_or_null(const PredictorConfig& cfg) {
  return cfg.kind == PredictorKind::kConvGumbel ? cfg.weights.get() : nullptr;
}

}  // namespace detail

inline VideoEncodeResult encode_video(const std::vector<PixelImage>& frames,
                                      const VideoEncodeConfig& cfg) {
  if (frames.empty()) throw InvalidInput("encode_video: empty sequence");
  if (cfg.n_layers < 1) throw InvalidInput("encode_video: n < 1");
  for (const auto& f : frames) {
    if (!f.same_shape(frames.front())) {
      throw InvalidInput("encode_video: frames must share dims and channels");
    }
  }
  const uint16_t q16 = quantize_q16(cfg.q);
  const int n = cfg.n_layers;
  const uint8_t abl_flag = cfg.temporal_ablation ? kFlagTemporalAblation : 0;

  VideoEncodeResult result;
  result.branch_frames.resize(static_cast<std::size_t>(n));
  std::vector<FrameBuffer> buffers(static_cast<std::size_t>(n));

  ByteWriter index;
  index.u32(static_cast<uint32_t>(frames.size()));
  ByteWriter sections;

  for (std::size_t t = 0; t < frames.size(); ++t) {
    const PixelImage& cur = frames[t];
    const bool intra =
        t == 0 || (cfg.gop > 0 && t % static_cast<std::size_t>(cfg.gop) == 0);
    FrameSectionInfo info;
    info.intra = intra;
    if (intra) {
      ImageEncodeConfig icfg;
      icfg.n_layers = n;
      icfg.q = cfg.q;
      icfg.predictor = cfg.intra_predictor;
      icfg.mode = ContainerMode::kVideoIntra;
      icfg.extra_flags = abl_flag;
      const AdaptiveEncodeResult enc = encode_image(cur, icfg);
      info.bytes_a = static_cast<uint32_t>(enc.bytes.size());
      for (int b = 1; b <= n; ++b) {
        PixelImage recon = decode_image(
            enc.bytes, b, detail::conv_weights_or_null(cfg.intra_predictor));
        buffers[static_cast<std::size_t>(b - 1)].push(recon);
        result.branch_frames[static_cast<std::size_t>(b - 1)].push_back(
            std::move(recon));
      }
      sections.raw(enc.bytes);
    } else {
      const PixelImage& ref_human = buffers[static_cast<std::size_t>(n - 1)].last();
      const PixelImage& prev1 = buffers[0].last();
      const MotionField motion = motion_estimate(cur, ref_human);
      const LatentTensor motion_latent = motion_to_latent(motion);
      const std::optional<RealGrid> temporal = detail::temporal_or_zero(
          prev1, motion_latent.dims.height, motion_latent.dims.width,
          cfg.temporal_ablation);

      AdaptiveEncodeParams mp;
      mp.mode = ContainerMode::kVideoMotion;
      mp.flags = abl_flag;
      mp.pixel_channels = static_cast<uint8_t>(cur.channels);
      mp.orig_width = static_cast<uint16_t>(cur.width);
      mp.orig_height = static_cast<uint16_t>(cur.height);
      mp.q16 = q16;
      mp.n_layers = n;
      mp.predictor = cfg.motion_predictor;
      mp.temporal = temporal;
      const AdaptiveEncodeResult menc = encode_latent_adaptive(motion_latent, mp);

      // The coded residual is taken against the human-branch prediction; each
      // branch adds its own residual prefix to its own compensation.
      const AdaptiveDecodeResult mdec_h = decode_latent_adaptive(
          menc.bytes, n, detail::conv_weights_or_null(cfg.motion_predictor),
          temporal);
      const PixelImage pred_human =
          motion_compensate(ref_human, motion_from_grid(mdec_h.aggregated));
      bool halved = false;
      const RealGrid residual = detail::residual_to_grid(cur, pred_human, &halved);
      const LatentTensor residual_latent =
          quantize(dct_analysis(residual, q16 / 16.0));

      AdaptiveEncodeParams rp = mp;
      rp.mode = ContainerMode::kVideoResidual;
      rp.flags = static_cast<uint8_t>(abl_flag | (halved ? kFlagResidualHalved : 0));
      rp.predictor = cfg.residual_predictor;
      const AdaptiveEncodeResult renc = encode_latent_adaptive(residual_latent, rp);

      info.bytes_a = static_cast<uint32_t>(menc.bytes.size());
      info.bytes_b = static_cast<uint32_t>(renc.bytes.size());

      // Simulate every branch through the decoder path (drift containment).
      std::vector<PixelImage> recons;
      recons.reserve(static_cast<std::size_t>(n));
      for (int b = 1; b <= n; ++b) {
        recons.push_back(decode_inter_frame(
            menc.bytes, renc.bytes, b,
            buffers[static_cast<std::size_t>(b - 1)].last(), prev1,
            detail::conv_weights_or_null(cfg.motion_predictor),
            detail::conv_weights_or_null(cfg.residual_predictor)));
      }
      for (int b = 1; b <= n; ++b) {
        buffers[static_cast<std::size_t>(b - 1)].push(recons[static_cast<std::size_t>(b - 1)]);
        result.branch_frames[static_cast<std::size_t>(b - 1)].push_back(
            std::move(recons[static_cast<std::size_t>(b - 1)]));
      }
      sections.raw(menc.bytes);
      sections.raw(renc.bytes);
    }
    index.u8(info.intra ? 0 : 1);
    index.u32(info.bytes_a);
    index.u32(info.bytes_b);
    result.frames.push_back(info);
  }

  // Top-level container: the index table rides in the side-info slot, the
  // frame sections follow the (payload-less) container body.
  ContainerHeader top;
  top.mode = ContainerMode::kVideoSequence;
  top.flags = abl_flag;
  top.pixel_channels = static_cast<uint8_t>(frames.front().channels);
  top.latent = Dims{0, 0, 0};
  top.orig_width = static_cast<uint16_t>(frames.front().width);
  top.orig_height = static_cast<uint16_t>(frames.front().height);
  top.q16 = q16;
  top.n_layers = static_cast<uint8_t>(n);
  top.predictor_kind = cfg.intra_predictor.kind;
  if (cfg.intra_predictor.kind == PredictorKind::kSigmaTopK) {
    for (int i = 0; i < n - 1; ++i) {
      top.keep_q_minus1.push_back(static_cast<uint16_t>(
          cfg.intra_predictor.keep[static_cast<std::size_t>(i)].units - 1));
    }
  } else {
    top.keep_q_minus1.assign(static_cast<std::size_t>(n) - 1, 0);
  }
  top.payload_lengths.assign(static_cast<std::size_t>(n), 0);
  const std::vector<uint8_t> index_bytes = index.take();
  top.side_length = static_cast<uint32_t>(index_bytes.size());

  std::vector<uint8_t> file = write_container(
      top, index_bytes, std::vector<Payload>(static_cast<std::size_t>(n)));
  const std::vector<uint8_t>& section_bytes = sections.bytes();
  file.insert(file.end(), section_bytes.begin(), section_bytes.end());
  result.bytes = std::move(file);
  return result;
}

struct VideoFrameEntry {
  bool intra = false;
  uint32_t bytes_a = 0;
  uint32_t bytes_b = 0;
  std::size_t offset = 0;  // of section a, from file start
};

struct VideoIndex {
  ContainerHeader header;
  std::vector<VideoFrameEntry> entries;
};

inline VideoIndex read_video_index(const std::vector<uint8_t>& bytes) {
  VideoIndex index;
  const Container top = read_container(bytes, 0);
  index.header = top.header;
  if (top.header.mode != ContainerMode::kVideoSequence) {
    throw FormatError("video: container is not a sequence stream");
  }
  ByteReader in(top.side);
  const uint32_t frame_count = in.u32();
  std::size_t offset = top.header.total_bytes();
  index.entries.reserve(frame_count);
  for (uint32_t t = 0; t < frame_count; ++t) {
    VideoFrameEntry e;
    e.intra = in.u8() == 0;
    e.bytes_a = in.u32();
    e.bytes_b = in.u32();
    e.offset = offset;
    offset += static_cast<std::size_t>(e.bytes_a) + e.bytes_b;
    index.entries.push_back(e);
  }
  if (in.remaining() != 0) throw FormatError("video: trailing index bytes");
  return index;
}

// Reconstructs the frame sequence of one branch (1..n; n is the human path).
// Branch 1 is simulated alongside the target branch because its previous
// reconstruction feeds the temporal features of every mask derivation.
inline std::vector<PixelImage> decode_video(
    const std::vector<uint8_t>& bytes, int branch,
    const ConvPredictorWeights* intra_weights = nullptr,
    const ConvPredictorWeights* motion_weights = nullptr,
    const ConvPredictorWeights* residual_weights = nullptr) {
  const VideoIndex index = read_video_index(bytes);
  const int n = index.header.n_layers;
  if (branch < 1 || branch > n) {
    throw RangeError("decode_video: branch " + std::to_string(branch) + " of " +
                     std::to_string(n));
  }
  std::vector<int> branches{1};
  if (branch != 1) branches.push_back(branch);

  std::vector<FrameBuffer> buffers(branches.size());
  std::vector<PixelImage> output;
  output.reserve(index.entries.size());

  auto slice = [&](std::size_t offset, std::size_t len) {
    if (offset + len > bytes.size()) throw FormatError("video: truncated section");
    return std::vector<uint8_t>(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                                bytes.begin() + static_cast<std::ptrdiff_t>(offset + len));
  };

  for (const auto& entry : index.entries) {
    if (entry.intra) {
      const std::vector<uint8_t> section = slice(entry.offset, entry.bytes_a);
      for (std::size_t k = 0; k < branches.size(); ++k) {
        PixelImage recon = decode_image(section, branches[k], intra_weights);
        if (branches[k] == branch) output.push_back(recon);
        buffers[k].push(std::move(recon));
      }
    } else {
      if (buffers[0].empty()) {
        throw DecodeOrderError("decode_video: inter frame before any reference");
      }
      const std::vector<uint8_t> motion_sec = slice(entry.offset, entry.bytes_a);
      const std::vector<uint8_t> residual_sec =
          slice(entry.offset + entry.bytes_a, entry.bytes_b);
      const PixelImage prev1 = buffers[0].last();
      std::vector<PixelImage> recons;
      recons.reserve(branches.size());
      for (std::size_t k = 0; k < branches.size(); ++k) {
        recons.push_back(decode_inter_frame(motion_sec, residual_sec, branches[k],
                                            buffers[k].last(), prev1,
                                            motion_weights, residual_weights));
      }
      for (std::size_t k = 0; k < branches.size(); ++k) {
        if (branches[k] == branch) output.push_back(recons[k]);
        buffers[k].push(std::move(recons[k]));
      }
    }
  }
  return output;
}

}  // namespace eac
