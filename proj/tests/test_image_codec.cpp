#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace eac;
using namespace testutil;

TEST_CASE("analysis of a constant-128 gray image is the zero latent") {
  PixelImage img(16, 16, 1, 128);
  const RealGrid latent = analysis(img, 1.0);
  CHECK(latent.dims == Dims{64, 2, 2});
  for (double v : latent.values) CHECK(v == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("the transform pair is orthonormal to 1e-9") {
  Rng rng(41);
  const PixelImage img = random_image(rng, 24, 16, 3);
  RealGrid centered(Dims{3, 16, 24});
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 24; ++x) {
        centered.at(c, y, x) = img.at(x, y, c) - 128.0;
      }
    }
  }
  const RealGrid back = dct_synthesis(dct_analysis(centered, 1.0), 1.0, 16, 24);
  for (std::size_t i = 0; i < centered.values.size(); ++i) {
    CHECK(back.values[i] == Catch::Approx(centered.values[i]).margin(1e-9));
  }
  // full pixel path: rounding after the exact inverse restores every sample
  const PixelImage pix = synthesis(analysis(img, 1.0), 1.0, 24, 16, 3);
  CHECK(pix.samples == img.samples);
}

TEST_CASE("doubling q halves every coefficient") {
  Rng rng(42);
  const PixelImage img = random_image(rng, 16, 16, 1);
  const RealGrid a = analysis(img, 2.0);
  const RealGrid b = analysis(img, 4.0);
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    CHECK(b.values[i] == Catch::Approx(a.values[i] / 2.0).margin(1e-12));
  }
}

TEST_CASE("padding handles non-multiple-of-8 dims") {
  Rng rng(43);
  // q >= 8 keeps worst-case DC coefficients inside the latent range
  const PixelImage img = structured_image(rng, 27, 19, 1);
  ImageEncodeConfig cfg;
  cfg.n_layers = 1;
  cfg.q = 8.0;
  const AdaptiveEncodeResult enc = encode_image(img, cfg);
  CHECK(enc.header.latent == Dims{64, 3, 4});
  const PixelImage out = decode_image(enc.bytes);
  CHECK(out.width == 27);
  CHECK(out.height == 19);
  CHECK(psnr(out, img) > 30.0);
}

TEST_CASE("n=1 reduces to a plain codec and matches the full-prefix decode") {
  Rng rng(44);
  const PixelImage img = structured_image(rng, 32, 32, 3);
  ImageEncodeConfig plain;
  plain.n_layers = 1;
  plain.q = 8.0;
  ImageEncodeConfig layered;
  layered.n_layers = 2;
  layered.q = 8.0;
  layered.predictor = topk_config({0.25});

  const AdaptiveEncodeResult enc1 = encode_image(img, plain);
  const AdaptiveEncodeResult enc2 = encode_image(img, layered);
  const PixelImage full1 = decode_image(enc1.bytes);
  const PixelImage full2 = decode_image(enc2.bytes, 2);
  CHECK(full1.samples == full2.samples);  // same latent, covering union
}

TEST_CASE("human-vision decode is independent of n and predictor") {
  Rng rng(45);
  const PixelImage img = structured_image(rng, 40, 24, 1);
  std::vector<PixelImage> decodes;
  for (int n : {1, 2, 4}) {
    ImageEncodeConfig cfg;
    cfg.n_layers = n;
    cfg.q = 8.0;
    std::vector<double> keeps;
    for (int i = 0; i < n - 1; ++i) keeps.push_back(0.5 / n);
    cfg.predictor.kind = PredictorKind::kSigmaTopK;
    for (double k : keeps) cfg.predictor.keep.push_back(KeepFraction::from_double(k));
    decodes.push_back(decode_image(encode_image(img, cfg).bytes));
  }
  CHECK(decodes[0].samples == decodes[1].samples);
  CHECK(decodes[0].samples == decodes[2].samples);
}

TEST_CASE("layer payloads add up and prefixes are cheaper") {
  Rng rng(46);
  const PixelImage img = random_image(rng, 64, 64, 1);
  ImageEncodeConfig cfg;
  cfg.n_layers = 2;
  cfg.q = 8.0;
  cfg.predictor = topk_config({0.25});
  const AdaptiveEncodeResult enc = encode_image(img, cfg);

  CHECK(enc.header.payload_lengths[0] <
        enc.header.payload_lengths[0] + enc.header.payload_lengths[1]);
  const double bpp1 = bpp(enc.header.prefix_bytes(1), img.pixel_count());
  const double bpp_human = bpp(enc.header.total_bytes(), img.pixel_count());
  CHECK(bpp1 < bpp_human);
}

TEST_CASE("mean-fill error shrinks as keep grows") {
  Rng rng(47);
  const PixelImage img = structured_image(rng, 64, 64, 1);
  double prev_mse = std::numeric_limits<double>::infinity();
  for (double keep : {0.25, 0.5, 0.9}) {
    ImageEncodeConfig cfg;
    cfg.n_layers = 2;
    cfg.q = 8.0;
    cfg.predictor = topk_config({keep});
    const AdaptiveEncodeResult enc = encode_image(img, cfg);
    const AdaptiveDecodeResult dec = decode_latent_adaptive(enc.bytes, 1);

    const LatentTensor truth = quantize(analysis(img, enc.header.q()));
    double mse = 0.0;
    for (std::size_t i = 0; i < truth.values.size(); ++i) {
      const double d = dec.aggregated.values[i] - truth.values[i];
      mse += d * d;
    }
    mse /= static_cast<double>(truth.values.size());
    CHECK(mse <= prev_mse);
    prev_mse = mse;
  }
}

TEST_CASE("corrupting layer 2 leaves the layer-1 decode untouched") {
  Rng rng(48);
  const PixelImage img = random_image(rng, 32, 32, 1);
  ImageEncodeConfig cfg;
  cfg.n_layers = 2;
  cfg.q = 8.0;
  cfg.predictor = topk_config({0.5});
  const AdaptiveEncodeResult enc = encode_image(img, cfg);

  const PixelImage clean = decode_image(enc.bytes, 1);
  std::vector<uint8_t> corrupt = enc.bytes;
  for (std::size_t pos = enc.header.prefix_bytes(1); pos < corrupt.size(); ++pos) {
    corrupt[pos] ^= 0xFF;
  }
  const PixelImage after = decode_image(corrupt, 1);
  CHECK(after.samples == clean.samples);
  CHECK_THROWS_AS(decode_image(corrupt, 2), CorruptionError);
}

TEST_CASE("encoding is byte-reproducible") {
  Rng rng(49);
  const PixelImage img = random_image(rng, 48, 40, 3);
  ImageEncodeConfig cfg;
  cfg.n_layers = 3;
  cfg.q = 12.0;
  cfg.predictor = topk_config({0.2, 0.3});
  const AdaptiveEncodeResult a = encode_image(img, cfg);
  const AdaptiveEncodeResult b = encode_image(img, cfg);
  CHECK(a.bytes == b.bytes);
}

TEST_CASE("decoder re-derives the encoder's masks from side info alone") {
  Rng rng(50);
  const PixelImage img = structured_image(rng, 32, 32, 1);

  // sigma-topk
  {
    ImageEncodeConfig cfg;
    cfg.n_layers = 3;
    cfg.q = 8.0;
    cfg.predictor = topk_config({0.2, 0.3});
    const AdaptiveEncodeResult enc = encode_image(img, cfg);
    const AdaptiveDecodeResult dec = decode_latent_adaptive(enc.bytes, 0);
    REQUIRE(dec.masks.masks.size() == enc.masks.masks.size());
    for (std::size_t j = 0; j < enc.masks.masks.size(); ++j) {
      CHECK(dec.masks.masks[j].bits == enc.masks.masks[j].bits);
    }
  }
  // conv-gumbel (argmax)
  {
    Rng wrng(51);
    ImageEncodeConfig cfg;
    cfg.n_layers = 2;
    cfg.q = 8.0;
    cfg.predictor = gumbel_config(std::make_shared<ConvPredictorWeights>(
        ConvPredictorWeights::random(64, 0, wrng)));
    const AdaptiveEncodeResult enc = encode_image(img, cfg);
    const AdaptiveDecodeResult dec =
        decode_latent_adaptive(enc.bytes, 0, cfg.predictor.weights.get());
    for (std::size_t j = 0; j < enc.masks.masks.size(); ++j) {
      CHECK(dec.masks.masks[j].bits == enc.masks.masks[j].bits);
    }
    // wrong weights are rejected by the CRC check
    Rng other(52);
    const ConvPredictorWeights wrong = ConvPredictorWeights::random(64, 0, other);
    CHECK_THROWS_AS(decode_latent_adaptive(enc.bytes, 0, &wrong), InvalidWeights);
    CHECK_THROWS_AS(decode_latent_adaptive(enc.bytes, 0, nullptr), InvalidInput);
  }
}

TEST_CASE("resolution and q are recorded in the header") {
  Rng rng(53);
  const PixelImage img = random_image(rng, 20, 12, 1);
  ImageEncodeConfig cfg;
  cfg.n_layers = 1;
  cfg.q = 2.5;
  const AdaptiveEncodeResult enc = encode_image(img, cfg);
  CHECK(enc.header.orig_width == 20);
  CHECK(enc.header.orig_height == 12);
  CHECK(enc.header.q16 == 40);  // 2.5 * 16
  CHECK(enc.header.q() == 2.5);
}

TEST_CASE("sampled-mask configs are refused on the encode path") {
  Rng rng(54);
  const PixelImage img = random_image(rng, 16, 16, 1);
  Rng wrng(55);
  ImageEncodeConfig cfg;
  cfg.n_layers = 2;
  cfg.predictor = gumbel_config(std::make_shared<ConvPredictorWeights>(
      ConvPredictorWeights::random(64, 0, wrng)));
  cfg.predictor.inference = InferenceMode::kSample;
  CHECK_THROWS_AS(encode_image(img, cfg), InvalidInput);
}
