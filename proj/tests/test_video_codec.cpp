#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace eac;
using namespace testutil;

namespace {

// Independent exhaustive-search oracle, written as plain loops with the same
// published tie-break contract but none of the library code.
MotionField motion_oracle(const PixelImage& cur, const PixelImage& ref) {
  const int h = cur.height, w = cur.width;
  MotionField field((h + 7) / 8, (w + 7) / 8);
  for (int by = 0; by < field.grid_h; ++by) {
    for (int bx = 0; bx < field.grid_w; ++bx) {
      long best = std::numeric_limits<long>::max();
      int bdx = 0, bdy = 0;
      bool first = true;
      for (int dy = -8; dy <= 8; ++dy) {
        for (int dx = -8; dx <= 8; ++dx) {
          long sad = 0;
          for (int y = by * 8; y < std::min(by * 8 + 8, h); ++y) {
            for (int x = bx * 8; x < std::min(bx * 8 + 8, w); ++x) {
              for (int c = 0; c < cur.channels; ++c) {
                const int rx = std::clamp(x + dx, 0, w - 1);
                const int ry = std::clamp(y + dy, 0, h - 1);
                sad += std::abs(int(cur.at(x, y, c)) - int(ref.at(rx, ry, c)));
              }
            }
          }
          const int cand_l1 = std::abs(dx) + std::abs(dy);
          const int best_l1 = std::abs(bdx) + std::abs(bdy);
          if (first || sad < best ||
              (sad == best && (cand_l1 < best_l1 ||
                               (cand_l1 == best_l1 &&
                                (dy < bdy || (dy == bdy && dx < bdx)))))) {
            best = sad;
            bdx = dx;
            bdy = dy;
            first = false;
          }
        }
      }
      field.dx[field.block_index(by, bx)] = static_cast<int8_t>(bdx);
      field.dy[field.block_index(by, bx)] = static_cast<int8_t>(bdy);
    }
  }
  return field;
}

PixelImage shift_with_clamp(const PixelImage& src, int dx, int dy) {
  PixelImage out(src.width, src.height, src.channels);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      const int sx = std::clamp(x + dx, 0, src.width - 1);
      const int sy = std::clamp(y + dy, 0, src.height - 1);
      for (int c = 0; c < src.channels; ++c) {
        out.at(x, y, c) = src.at(sx, sy, c);
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("motion estimation on identical frames is the zero field") {
  Rng rng(60);
  const PixelImage frame = random_image(rng, 32, 24, 1);
  const MotionField field = motion_estimate(frame, frame);
  for (std::size_t i = 0; i < field.dx.size(); ++i) {
    CHECK(field.dx[i] == 0);
    CHECK(field.dy[i] == 0);
  }
}

TEST_CASE("a (2,0) translation is recovered on interior blocks") {
  Rng rng(61);
  const PixelImage ref = random_image(rng, 40, 32, 1);
  const PixelImage cur = shift_with_clamp(ref, 2, 0);
  const MotionField field = motion_estimate(cur, ref);
  for (int by = 1; by + 1 < field.grid_h; ++by) {
    for (int bx = 1; bx + 1 < field.grid_w; ++bx) {
      CHECK(field.dx[field.block_index(by, bx)] == 2);
      CHECK(field.dy[field.block_index(by, bx)] == 0);
    }
  }
  // and the full field agrees with the independent oracle
  const MotionField oracle = motion_oracle(cur, ref);
  CHECK(field.dx == oracle.dx);
  CHECK(field.dy == oracle.dy);
}

TEST_CASE("motion search matches the brute-force oracle on noise") {
  Rng rng(62);
  for (int trial = 0; trial < 4; ++trial) {
    const PixelImage ref = random_image(rng, 24, 19, trial % 2 ? 3 : 1);
    const PixelImage cur = random_image(rng, 24, 19, trial % 2 ? 3 : 1);
    const MotionField field = motion_estimate(cur, ref);
    const MotionField oracle = motion_oracle(cur, ref);
    CHECK(field.dx == oracle.dx);
    CHECK(field.dy == oracle.dy);
  }
  CHECK_THROWS_AS(
      motion_estimate(PixelImage(8, 8, 1), PixelImage(16, 8, 1)), InvalidInput);
}

TEST_CASE("compensation copies displaced blocks with edge clamping") {
  Rng rng(63);
  const PixelImage ref = random_image(rng, 32, 24, 3);

  // zero field reproduces the reference
  MotionField zero((24 + 7) / 8, (32 + 7) / 8);
  CHECK(motion_compensate(ref, zero).samples == ref.samples);

  // (2,0) translation: prediction equals the shifted frame everywhere,
  // because the shift itself was built with the same clamp rule
  const PixelImage cur = shift_with_clamp(ref, 2, 0);
  const MotionField field = motion_estimate(cur, ref);
  const PixelImage pred = motion_compensate(ref, field);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < pred.samples.size(); ++i) {
    mismatches += pred.samples[i] != cur.samples[i] ? 1u : 0u;
  }
  CHECK(mismatches == 0);

  // random field against a per-pixel index-arithmetic oracle
  MotionField jitter = zero;
  for (std::size_t i = 0; i < jitter.dx.size(); ++i) {
    jitter.dx[i] = static_cast<int8_t>(rng.next_int(-8, 8));
    jitter.dy[i] = static_cast<int8_t>(rng.next_int(-8, 8));
  }
  const PixelImage out = motion_compensate(ref, jitter);
  for (int y = 0; y < ref.height; ++y) {
    for (int x = 0; x < ref.width; ++x) {
      const std::size_t b = jitter.block_index(y / 8, x / 8);
      const int sx = std::clamp(x + jitter.dx[b], 0, ref.width - 1);
      const int sy = std::clamp(y + jitter.dy[b], 0, ref.height - 1);
      for (int c = 0; c < 3; ++c) {
        REQUIRE(out.at(x, y, c) == ref.at(sx, sy, c));
      }
    }
  }
}

TEST_CASE("motion latent round trips through grids") {
  MotionField field(3, 4);
  Rng rng(64);
  for (std::size_t i = 0; i < field.dx.size(); ++i) {
    field.dx[i] = static_cast<int8_t>(rng.next_int(-8, 8));
    field.dy[i] = static_cast<int8_t>(rng.next_int(-8, 8));
  }
  const LatentTensor latent = motion_to_latent(field);
  RealGrid grid(latent.dims);
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    grid.values[i] = latent.values[i];
  }
  const MotionField back = motion_from_grid(grid);
  CHECK(back.dx == field.dx);
  CHECK(back.dy == field.dy);
}

TEST_CASE("frame buffer pads references by repeating the oldest") {
  FrameBuffer buffer;
  CHECK_THROWS_AS(buffer.refs(), DecodeOrderError);
  PixelImage f1(4, 4, 1, 10), f2(4, 4, 1, 20), f3(4, 4, 1, 30), f4(4, 4, 1, 40);
  buffer.push(f1);
  auto refs = buffer.refs();
  CHECK(refs[0]->at(0, 0, 0) == 10);
  CHECK(refs[1]->at(0, 0, 0) == 10);
  CHECK(refs[2]->at(0, 0, 0) == 10);
  buffer.push(f2);
  refs = buffer.refs();
  CHECK(refs[0]->at(0, 0, 0) == 20);
  CHECK(refs[1]->at(0, 0, 0) == 10);
  CHECK(refs[2]->at(0, 0, 0) == 10);
  buffer.push(f3);
  buffer.push(f4);
  CHECK(buffer.frames.size() == 3);
  refs = buffer.refs();
  CHECK(refs[0]->at(0, 0, 0) == 40);
  CHECK(refs[2]->at(0, 0, 0) == 20);
}

TEST_CASE("static scene: inter payloads collapse against intra payloads") {
  // mid-range texture so q=1 does not clamp the DC band
  Rng rng(65);
  PixelImage frame(48, 48, 1);
  for (auto& s : frame.samples) {
    s = static_cast<uint8_t>(116 + rng.next_below(25));
  }
  std::vector<PixelImage> seq(3, frame);

  VideoEncodeConfig cfg;
  cfg.n_layers = 1;
  cfg.q = 1.0;
  const VideoEncodeResult enc = encode_video(seq, cfg);
  const VideoIndex index = read_video_index(enc.bytes);
  REQUIRE(index.entries.size() == 3);
  REQUIRE(index.entries[0].intra);
  REQUIRE(!index.entries[1].intra);

  auto payload_bits = [&](const VideoFrameEntry& e) {
    double bits = 0.0;
    auto section_payloads = [&](std::size_t offset, std::size_t len) {
      const std::vector<uint8_t> sec(
          enc.bytes.begin() + static_cast<std::ptrdiff_t>(offset),
          enc.bytes.begin() + static_cast<std::ptrdiff_t>(offset + len));
      const ContainerHeader h = read_container_header(sec);
      double b = 0.0;
      for (uint32_t l : h.payload_lengths) b += l * 8.0;
      return b;
    };
    double bits_a = section_payloads(e.offset, e.bytes_a);
    double bits_b = e.intra ? 0.0
                            : section_payloads(e.offset + e.bytes_a, e.bytes_b);
    return bits_a + bits_b;
  };

  const double intra_bits = payload_bits(index.entries[0]);
  const double inter_bits = payload_bits(index.entries[1]);
  CHECK(inter_bits < 0.10 * intra_bits);
}

TEST_CASE("decoder reproduces every encoder branch bit for bit") {
  Rng rng(66);
  std::vector<PixelImage> seq;
  PixelImage base = structured_image(rng, 32, 24, 1);
  for (int t = 0; t < 4; ++t) {
    seq.push_back(shift_with_clamp(base, 2 * t, t));
  }
  VideoEncodeConfig cfg;
  cfg.n_layers = 3;
  cfg.q = 8.0;
  cfg.intra_predictor = topk_config({0.3, 0.3});
  cfg.motion_predictor = topk_config({0.3, 0.3});
  cfg.residual_predictor = topk_config({0.3, 0.3});
  const VideoEncodeResult enc = encode_video(seq, cfg);

  for (int branch = 1; branch <= 3; ++branch) {
    const std::vector<PixelImage> decoded = decode_video(enc.bytes, branch);
    REQUIRE(decoded.size() == seq.size());
    for (std::size_t t = 0; t < seq.size(); ++t) {
      REQUIRE(decoded[t].samples ==
              enc.branch_frames[static_cast<std::size_t>(branch - 1)][t].samples);
    }
  }
  CHECK_THROWS_AS(decode_video(enc.bytes, 4), RangeError);
  CHECK_THROWS_AS(decode_video(enc.bytes, 0), RangeError);
}

TEST_CASE("two-frame static sequence matches the direct transform oracle") {
  Rng rng(67);
  PixelImage frame(32, 32, 1);
  for (auto& s : frame.samples) {
    s = static_cast<uint8_t>(100 + rng.next_below(57));
  }
  std::vector<PixelImage> seq(2, frame);
  VideoEncodeConfig cfg;
  cfg.n_layers = 1;
  cfg.q = 2.0;
  const VideoEncodeResult enc = encode_video(seq, cfg);

  const PixelImage& recon1 = enc.branch_frames[0][0];
  const PixelImage& recon2 = enc.branch_frames[0][1];

  // direct path: zero motion, so the residual is frame - recon1, coded by the
  // exact transform/quantize round trip (the entropy stage is lossless)
  RealGrid residual(Dims{1, 32, 32});
  int max_abs = 0;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      const int r = int(frame.at(x, y, 0)) - recon1.at(x, y, 0);
      residual.at(0, y, x) = r;
      max_abs = std::max(max_abs, std::abs(r));
    }
  }
  REQUIRE(max_abs <= 127);  // no halving expected for this content
  const LatentTensor rlat = quantize(dct_analysis(residual, 2.0));
  RealGrid rreal(rlat.dims);
  for (std::size_t i = 0; i < rreal.values.size(); ++i) {
    rreal.values[i] = rlat.values[i];
  }
  const RealGrid rsyn = dct_synthesis(rreal, 2.0, 32, 32);
  PixelImage oracle(32, 32, 1);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      const int v = recon1.at(x, y, 0) + round_half_away(rsyn.at(0, y, x));
      oracle.at(x, y, 0) = static_cast<uint8_t>(std::clamp(v, 0, 255));
    }
  }
  CHECK(recon2.samples == oracle.samples);

  // and the residual step keeps frame 2 close to frame 1's reconstruction
  CHECK(psnr(recon2, recon1) > 40.0);
}

TEST_CASE("branch 1 is isolated from corruption in later layers") {
  Rng rng(68);
  std::vector<PixelImage> seq;
  PixelImage base = structured_image(rng, 32, 32, 1);
  for (int t = 0; t < 3; ++t) seq.push_back(shift_with_clamp(base, t, 0));

  VideoEncodeConfig cfg;
  cfg.n_layers = 2;
  cfg.q = 8.0;
  cfg.intra_predictor = topk_config({0.4});
  cfg.motion_predictor = topk_config({0.4});
  cfg.residual_predictor = topk_config({0.4});
  const VideoEncodeResult enc = encode_video(seq, cfg);
  const std::vector<PixelImage> clean = decode_video(enc.bytes, 1);

  // flip bytes inside layer 2 of every residual section
  std::vector<uint8_t> corrupt = enc.bytes;
  const VideoIndex index = read_video_index(enc.bytes);
  for (const auto& entry : index.entries) {
    if (entry.intra) continue;
    const std::size_t roff = entry.offset + entry.bytes_a;
    const std::vector<uint8_t> sec(
        enc.bytes.begin() + static_cast<std::ptrdiff_t>(roff),
        enc.bytes.begin() + static_cast<std::ptrdiff_t>(roff + entry.bytes_b));
    const ContainerHeader h = read_container_header(sec);
    for (std::size_t pos = h.prefix_bytes(1); pos < h.prefix_bytes(2); ++pos) {
      corrupt[roff + pos] ^= 0x55;
    }
  }
  const std::vector<PixelImage> after = decode_video(corrupt, 1);
  REQUIRE(after.size() == clean.size());
  for (std::size_t t = 0; t < clean.size(); ++t) {
    CHECK(after[t].samples == clean[t].samples);
  }
  CHECK_THROWS_AS(decode_video(corrupt, 2), CorruptionError);
}

TEST_CASE("temporal ablation changes conv masks but not loop integrity") {
  Rng rng(69);
  std::vector<PixelImage> seq;
  PixelImage base = structured_image(rng, 32, 32, 1);
  for (int t = 0; t < 3; ++t) seq.push_back(shift_with_clamp(base, 2 * t, 0));

  Rng wrng(70);
  auto motion_w = std::make_shared<ConvPredictorWeights>(
      ConvPredictorWeights::random(2, kTemporalChannels, wrng, 0.3));
  auto residual_w = std::make_shared<ConvPredictorWeights>(
      ConvPredictorWeights::random(64, kTemporalChannels, wrng, 0.3));

  VideoEncodeConfig cfg;
  cfg.n_layers = 2;
  cfg.q = 8.0;
  cfg.intra_predictor = topk_config({0.4});
  cfg.motion_predictor = gumbel_config(motion_w);
  cfg.residual_predictor = gumbel_config(residual_w);

  const VideoEncodeResult with_temporal = encode_video(seq, cfg);
  cfg.temporal_ablation = true;
  const VideoEncodeResult ablated = encode_video(seq, cfg);

  // both loops decode bit-identically to their encoder reconstructions
  for (const auto* enc : {&with_temporal, &ablated}) {
    for (int branch = 1; branch <= 2; ++branch) {
      const std::vector<PixelImage> decoded = decode_video(
          enc->bytes, branch, nullptr, motion_w.get(), residual_w.get());
      for (std::size_t t = 0; t < seq.size(); ++t) {
        REQUIRE(decoded[t].samples ==
                enc->branch_frames[static_cast<std::size_t>(branch - 1)][t].samples);
      }
    }
  }
  // the ablation flag is recorded and changes the bitstream
  const VideoIndex vi = read_video_index(ablated.bytes);
  CHECK((vi.header.flags & kFlagTemporalAblation) != 0);
  CHECK(ablated.bytes != with_temporal.bytes);
}

TEST_CASE("gop override inserts periodic intra frames") {
  Rng rng(71);
  std::vector<PixelImage> seq;
  PixelImage base = structured_image(rng, 24, 16, 1);
  for (int t = 0; t < 5; ++t) seq.push_back(shift_with_clamp(base, t, 0));
  VideoEncodeConfig cfg;
  cfg.n_layers = 1;
  cfg.q = 8.0;
  cfg.gop = 2;
  const VideoEncodeResult enc = encode_video(seq, cfg);
  const VideoIndex index = read_video_index(enc.bytes);
  REQUIRE(index.entries.size() == 5);
  CHECK(index.entries[0].intra);
  CHECK(!index.entries[1].intra);
  CHECK(index.entries[2].intra);
  CHECK(!index.entries[3].intra);
  CHECK(index.entries[4].intra);
  const std::vector<PixelImage> decoded = decode_video(enc.bytes, 1);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    CHECK(decoded[t].samples == enc.branch_frames[0][t].samples);
  }
}
