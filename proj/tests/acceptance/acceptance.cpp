// Acceptance suite: runs every contract criterion end to end and prints one
// pass/fail line per criterion. Exit code is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "../resize_reference.hpp"
#include "../test_util.hpp"
#include "solo/decode.hpp"
#include "solo/image.hpp"
#include "solo/mixture.hpp"
#include "solo/model.hpp"
#include "solo/packing.hpp"
#include "solo/serialize.hpp"
#include "solo/tokenizer.hpp"
#include "solo/train.hpp"

namespace fs = std::filesystem;
using namespace solo;
using Clock = std::chrono::steady_clock;

namespace {

struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& what) {
  if (!cond) throw CheckFailure(what);
}

struct Harness {
  int failures = 0;

  void criterion(const char* name, const std::function<std::string()>& body) {
    const auto t0 = Clock::now();
    bool ok = true;
    std::string detail;
    try {
      detail = body();
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::printf("[%s] %s (%.2fs)%s%s\n", ok ? "PASS" : "FAIL", name, secs,
                detail.empty() ? "" : ": ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- C1/C2: exhaustive resize grid ----------------------------------------

std::string c1_resize_fidelity() {
  const PreprocessConfig cfg{};
  const auto t0 = Clock::now();
  std::uint64_t cells = 0;
  for (std::int64_t w = 1; w <= 2048; ++w) {
    for (std::int64_t h = 1; h <= 2048; ++h) {
      const ImageDims got = resize_output_dims({w, h}, cfg);
      const ImageDims expect = test::resize_reference({w, h}, 32, 1024);
      if (got != expect) {
        throw CheckFailure("mismatch at (" + std::to_string(w) + "," + std::to_string(h) + ")");
      }
      ++cells;
    }
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  require(secs < 10.0, "exhaustive grid took too long");
  return std::to_string(cells) + " cells, zero mismatches";
}

std::string c2_resize_invariants() {
  const PreprocessConfig cfg{};
  for (std::int64_t w = 1; w <= 2048; ++w) {
    for (std::int64_t h = 1; h <= 2048; ++h) {
      const ImageDims out = resize_output_dims({w, h}, cfg);
      if (out.width % 32 != 0 || out.height % 32 != 0) {
        throw CheckFailure("non-multiple output at (" + std::to_string(w) + "," +
                           std::to_string(h) + ")");
      }
      const bool height_is_short = h <= w;
      const std::int64_t out_long = height_is_short ? out.width : out.height;
      const std::int64_t out_short = height_is_short ? out.height : out.width;
      if (out_long > 1024 || out_short > 1056) {
        throw CheckFailure("bound violated at (" + std::to_string(w) + "," + std::to_string(h) +
                           ")");
      }
    }
  }
  require(resize_output_dims({32, 32}, cfg) == ImageDims{64, 96}, "(32,32) quirk");
  require(resize_output_dims({2000, 2000}, cfg) == ImageDims{1024, 1056}, "(2000,2000) quirk");
  return "multiples of 32, long <= 1024, short <= 1056, quirks reproduced";
}

// ---- C3: layout law --------------------------------------------------------

std::string c3_layout_law() {
  std::mt19937_64 rng(303);
  for (int i = 0; i < 1000; ++i) {
    const auto rows = static_cast<std::int64_t>(1 + rng() % 32);
    const auto cols = static_cast<std::int64_t>(1 + rng() % 32);
    const PatchGrid grid = test::make_grid(rows, cols, 2, rng);
    const auto span = layout_vision_span(grid);
    require(span.size() == static_cast<std::size_t>(rows * cols + rows + 1), "length law");
    std::int64_t begins = 0, ends = 0, seps = 0;
    for (const auto& e : span) {
      if (!e.is(TokenElement::Kind::Special)) continue;
      begins += e.special_kind() == SpecialToken::VisionBegin;
      ends += e.special_kind() == SpecialToken::VisionEnd;
      seps += e.special_kind() == SpecialToken::VRowSep;
    }
    require(begins == 1 && ends == 1, "exactly one begin and one end");
    require(seps == rows - 1, "separator count");
  }
  return "1000 grids: |span| = rows*cols + rows + 1, separators = rows - 1";
}

// ---- C4: vision-token count ------------------------------------------------

std::string c4_vision_token_count() {
  std::mt19937_64 rng(404);
  const PreprocessConfig cfg{};

  // Direct: an already-aligned 672x512 image.
  const RawImage aligned = test::make_noise_image(672, 512, rng);
  const PatchGrid grid = extract_patches(aligned, cfg);
  require(grid.patch_count() == 336, "672x512 direct extraction");

  // Through the pipeline: 640x480 resizes to exactly 672x512.
  const RawImage source = test::make_noise_image(640, 480, rng);
  const RawImage resized = resize_image(source, cfg);
  require(resized.dims == ImageDims{672, 512}, "640x480 -> 672x512");
  const auto span = layout_vision_span(extract_patches(resized, cfg));
  std::size_t patch_tokens = 0;
  for (const auto& e : span) patch_tokens += e.is(TokenElement::Kind::Patch);
  require(patch_tokens == 336, "patch tokens through the pipeline");
  require(span.size() == 353, "span length 336 + 15 + 2");
  return "336 patch tokens = (672/32) x (512/32)";
}

// ---- C5: packing conservation + mask soundness ------------------------------

std::string c5_packing_and_masks() {
  std::mt19937_64 rng(505);
  std::size_t sequences = 0;
  for (int stream_i = 0; stream_i < 1000; ++stream_i) {
    test::ExampleOptions opt;
    opt.patch_size = 4;
    opt.max_text = 60;
    opt.max_grid_side = 3;
    const auto stream = test::make_random_stream(rng, 6, opt);
    const auto seqs = pack_examples(stream, 512, PackMode::Pretrain);
    sequences += seqs.size();

    // Conservation with per-example order.
    std::vector<TokenElement> flat_in;
    for (const auto& ex : stream) {
      flat_in.insert(flat_in.end(), ex.elements.begin(), ex.elements.end());
    }
    std::vector<TokenElement> flat_out;
    for (const auto& s : seqs) {
      for (const auto& e : s.elements) {
        if (!e.is(TokenElement::Kind::Pad)) flat_out.push_back(e);
      }
    }
    require(flat_in == flat_out, "element conservation");

    for (const auto& seq : seqs) {
      const auto pred = build_attention_predicate(seq);
      const std::size_t len = seq.size();
      for (std::size_t q = 0; q < len; ++q) {
        for (std::size_t k = 0; k < len; ++k) {
          const bool oracle = k <= q && !seq.elements[q].is(TokenElement::Kind::Pad) &&
                              !seq.elements[k].is(TokenElement::Kind::Pad) &&
                              seq.segment_ids[q] == seq.segment_ids[k];
          if (pred.allowed(q, k) != oracle) throw CheckFailure("attention oracle mismatch");
        }
      }
      // No vision span straddles a segment (and hence sequence) boundary.
      int open = 0;
      for (std::size_t t = 0; t < len; ++t) {
        if (t > 0 && seq.segment_ids[t] != seq.segment_ids[t - 1]) {
          require(open == 0, "span straddles a boundary");
        }
        const TokenElement& e = seq.elements[t];
        if (e.is(TokenElement::Kind::Special)) {
          open += e.special_kind() == SpecialToken::VisionBegin;
          open -= e.special_kind() == SpecialToken::VisionEnd;
        }
      }
      require(open == 0, "unterminated span");
      // Mask soundness: active implies a text target in the same segment.
      for (std::size_t t = 0; t < len; ++t) {
        if (!seq.loss_mask[t]) continue;
        require(t + 1 < len, "active final position");
        require(seq.segment_ids[t] == seq.segment_ids[t + 1], "cross-segment target");
        require(seq.elements[t + 1].is(TokenElement::Kind::Text), "non-text target");
      }
    }
  }
  return "1000 streams, " + std::to_string(sequences) +
         " sequences: conservation, L^2 oracle, span atomicity";
}

// ---- C6: loss-mask rule ------------------------------------------------------

std::string c6_loss_mask_rule() {
  std::mt19937_64 rng(606);
  // Worked example: [<vision>, patch, </vision>, "A", "dog"].
  Example worked;
  worked.kind = ExampleKind::PretrainCaptioned;
  worked.elements = layout_vision_span(test::make_grid(1, 1, 4, rng));
  worked.elements.push_back(TokenElement::text('A'));
  worked.elements.push_back(TokenElement::text('d'));
  const auto worked_seq = pack_examples(std::vector<Example>{worked}, 5, PackMode::Pretrain);
  require(worked_seq.front().loss_mask == std::vector<std::uint8_t>{0, 0, 1, 1, 0},
          "worked example mask");

  for (int iter = 0; iter < 500; ++iter) {
    test::ExampleOptions opt;
    opt.patch_size = 4;
    const auto stream = test::make_random_stream(rng, 6, opt);
    for (const auto& seq : pack_examples(stream, 256, PackMode::Pretrain)) {
      for (std::size_t t = 0; t < seq.size(); ++t) {
        const bool expect = t + 1 < seq.size() &&
                            seq.segment_ids[t] == seq.segment_ids[t + 1] &&
                            seq.elements[t + 1].is(TokenElement::Kind::Text);
        require((seq.loss_mask[t] != 0) == expect, "pretrain mask rule");
      }
    }
  }

  // Supervised: map every packed position back to (example, local index) and
  // apply the response-region rule. Supervised mode never splits, so non-pad
  // positions walk the examples in arrival order.
  for (int iter = 0; iter < 200; ++iter) {
    test::ExampleOptions opt;
    opt.patch_size = 4;
    opt.kind = ExampleKind::Supervised;
    opt.max_text = 20;
    const auto stream = test::make_random_stream(rng, 4, opt);
    std::size_t ex_idx = 0, local = 0;
    for (const auto& seq : pack_examples(stream, 256, PackMode::Supervised)) {
      std::vector<std::size_t> pos_example(seq.size(), SIZE_MAX);
      std::vector<std::size_t> pos_local(seq.size(), SIZE_MAX);
      for (std::size_t t = 0; t < seq.size(); ++t) {
        if (seq.elements[t].is(TokenElement::Kind::Pad)) continue;
        pos_example[t] = ex_idx;
        pos_local[t] = local;
        ++local;
        if (local == stream[ex_idx].elements.size()) {
          ++ex_idx;
          local = 0;
        }
      }
      for (std::size_t t = 0; t < seq.size(); ++t) {
        bool expect = t + 1 < seq.size() && seq.segment_ids[t] == seq.segment_ids[t + 1] &&
                      seq.elements[t + 1].is(TokenElement::Kind::Text);
        if (expect) {
          const Example& ex = stream[pos_example[t + 1]];
          if (!ex.loss_on_prompt) expect = pos_local[t + 1] >= ex.response_start;
        }
        require((seq.loss_mask[t] != 0) == expect, "supervised response-region rule");
      }
    }
    require(ex_idx == stream.size(), "example walk ended mid-stream");
  }

  // Deterministic spot check of the response-region rule.
  Example sup;
  sup.kind = ExampleKind::Supervised;
  for (int i = 0; i < 6; ++i) sup.elements.push_back(TokenElement::text(static_cast<std::uint32_t>(i)));
  sup.response_start = 3;
  auto sup_seq = pack_examples(std::vector<Example>{sup}, 6, PackMode::Supervised);
  require(sup_seq.front().loss_mask == std::vector<std::uint8_t>{0, 0, 1, 1, 1, 0},
          "response-region mask");
  sup.loss_on_prompt = true;
  sup_seq = pack_examples(std::vector<Example>{sup}, 6, PackMode::Supervised);
  require(sup_seq.front().loss_mask == std::vector<std::uint8_t>{1, 1, 1, 1, 1, 0},
          "loss_on_prompt flag");

  return "worked example [F,F,T,T,F]; randomized rule; response region honored";
}

// ---- C7: packing transparency ------------------------------------------------

ModelConfig acceptance_model_config() {
  ModelConfig cfg;
  cfg.d_model = 64;
  cfg.n_layers = 2;
  cfg.n_heads = 4;
  cfg.ffn_dim = 256;
  cfg.text_vocab_size = 64;
  cfg.patch_size = 4;
  cfg.max_seq_len = 512;
  return cfg;
}

std::string c7_packing_transparency() {
  std::mt19937_64 rng(707);
  const ModelConfig cfg = acceptance_model_config();
  const ModelParams params = ModelParams::init(cfg, 7070);
  double worst = 0.0;
  for (int set_i = 0; set_i < 100; ++set_i) {
    test::ExampleOptions opt;
    opt.text_vocab = 64;
    opt.patch_size = 4;
    opt.max_text = 24;
    opt.max_grid_side = 2;
    const auto examples = test::make_random_stream(rng, 4, opt);
    const auto packed = pack_examples(examples, 192, PackMode::Pretrain);

    std::size_t seq_idx = 0, offset = 0;
    for (const auto& ex : examples) {
      if (offset + ex.elements.size() > 192) {
        ++seq_idx;
        offset = 0;
      }
      PackedSequence alone;
      alone.elements = ex.elements;
      alone.segment_ids.assign(ex.elements.size(), 0);
      alone.num_segments = 1;
      alone.loss_mask = build_loss_mask(alone);
      const ForwardResult solo_run = forward(alone, params);
      const ForwardResult packed_run = forward(packed.at(seq_idx), params);
      for (std::size_t t = 0; t < ex.elements.size(); ++t) {
        for (std::size_t c = 0; c < solo_run.cols; ++c) {
          const double diff =
              std::abs(solo_run.row(t)[c] - packed_run.row(offset + t)[c]);
          worst = std::max(worst, diff);
          if (diff >= 1e-5) throw CheckFailure("logit deviation " + std::to_string(diff));
        }
      }
      offset += ex.elements.size();
    }
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "max |delta| = %.3g", worst);
  return "100 example sets within 1e-5 (" + std::string(buf) + ")";
}

// ---- C8: segment isolation -----------------------------------------------------

std::string c8_segment_isolation() {
  std::mt19937_64 rng(808);
  const ModelConfig cfg = acceptance_model_config();
  const ModelParams params = ModelParams::init(cfg, 8080);
  for (int iter = 0; iter < 10; ++iter) {
    test::ExampleOptions opt;
    opt.text_vocab = 64;
    opt.patch_size = 4;
    opt.max_text = 16;
    const auto examples = test::make_random_stream(rng, 3, opt);
    const auto packed = pack_examples(examples, 160, PackMode::Pretrain);
    const PackedSequence& base = packed.front();
    if (base.num_segments < 2) continue;

    for (std::uint32_t victim = 0; victim < base.num_segments; ++victim) {
      PackedSequence mutated = base;
      bool changed = false;
      for (std::size_t t = 0; t < mutated.size(); ++t) {
        if (mutated.segment_ids[t] != victim || changed) continue;
        TokenElement& e = mutated.elements[t];
        if (e.is(TokenElement::Kind::Text)) {
          e.id = (e.id + 1) % 64;
          changed = true;
        } else if (e.is(TokenElement::Kind::Patch)) {
          for (auto& px : e.pixels) px = static_cast<std::uint8_t>(px ^ 0xA5);
          changed = true;
        }
      }
      if (!changed) continue;
      const ForwardResult a = forward(base, params);
      const ForwardResult b = forward(mutated, params);
      for (std::size_t t = 0; t < base.size(); ++t) {
        if (base.segment_ids[t] == victim) continue;
        for (std::size_t c = 0; c < a.cols; ++c) {
          if (a.row(t)[c] != b.row(t)[c]) {
            throw CheckFailure("segment " + std::to_string(victim) +
                               " leaked into position " + std::to_string(t));
          }
        }
      }
    }
  }
  return "perturbing any segment changes other segments' logits by exactly 0";
}

// ---- C9: gradient fidelity -------------------------------------------------------

std::string c9_gradient_fidelity() {
  std::mt19937_64 rng(909);
  const ModelConfig cfg = acceptance_model_config();
  const ModelParams params = ModelParams::init(cfg, 9090);

  // Vision span ahead of text targets, so the projector carries gradient.
  Example ex;
  ex.kind = ExampleKind::PretrainCaptioned;
  ex.elements = layout_vision_span(test::make_grid(2, 2, 4, rng));
  for (int i = 0; i < 10; ++i) {
    ex.elements.push_back(TokenElement::text(static_cast<std::uint32_t>(1 + rng() % 63)));
  }
  test::ExampleOptions opt;
  opt.text_vocab = 64;
  opt.patch_size = 4;
  opt.max_text = 10;
  auto stream = test::make_random_stream(rng, 2, opt);
  stream.insert(stream.begin(), ex);
  const auto packed = pack_examples(stream, 64, PackMode::Pretrain);
  const PackedSequence& seq = packed.front();

  ModelParams grads = ModelParams::zeros_like(cfg);
  loss_and_gradients(seq, params, grads);
  double proj_sq = 0.0;
  for (double v : grads.proj_weight.data) proj_sq += v * v;
  require(proj_sq > 0.0, "projector gradient is zero despite vision-conditioned targets");

  const GradCheckResult r = grad_check(params, seq, 1e-4, 200, 4242);
  require(r.coords_checked >= 200, "fewer than 200 coordinates sampled");
  require(r.max_rel_error < 1e-4,
          "max relative error " + std::to_string(r.max_rel_error) + " in " + r.worst_tensor);

  PackedSequence silent = seq;
  std::fill(silent.loss_mask.begin(), silent.loss_mask.end(), 0);
  ModelParams zero_grads = ModelParams::zeros_like(cfg);
  loss_and_gradients(silent, params, zero_grads);
  for (const Tensor* t : zero_grads.tensors()) {
    for (double v : t->data) require(v == 0.0, "nonzero gradient with an all-false mask");
  }

  char buf[96];
  std::snprintf(buf, sizeof(buf), "%zu coords, max rel err %.2e (worst: %s)", r.coords_checked,
                r.max_rel_error, r.worst_tensor.c_str());
  return buf;
}

// ---- C10: LR schedule endpoints ----------------------------------------------------

std::string c10_lr_endpoints() {
  TrainConfig cfg;
  cfg.peak_lr = 5e-5;
  cfg.min_lr = 5e-6;
  cfg.warmup_steps = 200;
  cfg.total_steps = 1525;
  require(lr_at_step(0, cfg) == 0.0, "lr(0) != 0");
  require(lr_at_step(200, cfg) == 5e-5, "lr(200) != 5e-5");
  require(lr_at_step(1525, cfg) == 5e-6, "lr(total) != 5e-6");
  return "lr(0)=0, lr(200)=5e-5, lr(1525)=5e-6, all exact";
}

// ---- C11: token accounting ------------------------------------------------------------

std::string c11_token_accounting() {
  const fs::path dir = fs::temp_directory_path() / "solo_acceptance_account";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream a(dir / "a.jsonl");
    a << R"({"dataset":"a","text":"hello world","kind":"pretrain-text"})" << "\n";
    a << R"({"dataset":"a","image_path":"i.ppm","image_width":32,"image_height":32,)"
      << R"("text":"hi","kind":"pretrain-captioned"})" << "\n";
    std::ofstream b(dir / "b.jsonl");
    b << R"({"dataset":"b","image_path":"j.ppm","image_width":640,"image_height":480,)"
      << R"("text":"","kind":"pretrain-captioned"})" << "\n";
  }
  ByteTokenizer tok;
  const PreprocessConfig cfg{};
  const DatasetEntry ea{"a", dir / "a.jsonl", Modality::ImageText, 1.0};
  const DatasetEntry eb{"b", dir / "b.jsonl", Modality::ImageText, 1.0};

  // Hand counts: "hello world"=11 + "hi"=2 -> 13 text tokens; 32x32 image
  // resizes to 64x96 -> 6 patches, 4 specials; 640x480 -> 672x512 -> 336.
  const auto acct_a = account_tokens(std::vector<DatasetEntry>{ea}, tok, cfg);
  require(acct_a.text_tokens() == 13, "dataset a text tokens");
  require(acct_a.vision_tokens() == 6, "dataset a vision tokens");
  require(acct_a.special_tokens() == 4, "dataset a special tokens");

  const auto acct_b = account_tokens(std::vector<DatasetEntry>{eb}, tok, cfg);
  require(acct_b.vision_tokens() == 336, "dataset b vision tokens");
  require(acct_b.text_tokens() == 0, "dataset b text tokens");

  const auto acct_ab = account_tokens(std::vector<DatasetEntry>{ea, eb}, tok, cfg);
  require(acct_ab.text_tokens() == acct_a.text_tokens() + acct_b.text_tokens(),
          "text additivity");
  require(acct_ab.vision_tokens() == acct_a.vision_tokens() + acct_b.vision_tokens(),
          "vision additivity");
  require(acct_ab.special_tokens() == acct_a.special_tokens() + acct_b.special_tokens(),
          "special additivity");
  const double pct_sum = acct_ab.text_pct() + acct_ab.vision_pct();
  require(std::abs(pct_sum - 100.0) < 0.01, "percentages sum to 100");

  fs::remove_all(dir);
  return "hand counts exact; additive over disjoint corpora (Table-style split is corpus-bound)";
}

// ---- C12: desk-scale learning smoke -----------------------------------------------------

std::string c12_learning_smoke() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1212);
  const PreprocessConfig pre{};
  ByteTokenizer tok;

  const char* labels[8] = {"crimson", "azure", "emerald", "amber",
                           "violet", "coral", "slate", "ivory"};
  const std::uint8_t base_colors[8][3] = {{220, 30, 30}, {30, 90, 220}, {30, 200, 90},
                                          {230, 160, 20}, {140, 40, 200}, {250, 120, 110},
                                          {100, 110, 120}, {245, 240, 220}};

  std::vector<Example> corpus;
  for (int i = 0; i < 50; ++i) {
    const int cls = i % 8;
    RawImage img = test::make_image(64, 64, base_colors[cls][0], base_colors[cls][1],
                                    base_colors[cls][2]);
    for (auto& px : img.pixels) {
      const int jitter = static_cast<int>(rng() % 17) - 8;
      px = static_cast<std::uint8_t>(std::clamp(static_cast<int>(px) + jitter, 0, 255));
    }
    Example ex;
    ex.source_dataset = "labels";
    ex.kind = ExampleKind::PretrainCaptioned;
    const RawImage resized = resize_image(img, pre);
    ex.elements = layout_vision_span(extract_patches(resized, pre));
    for (std::uint32_t id : tok.encode(labels[cls])) ex.elements.push_back(TokenElement::text(id));
    corpus.push_back(std::move(ex));
  }
  const auto packed = pack_examples(corpus, 512, PackMode::Pretrain);

  TrainOptions opts;
  opts.model.d_model = 64;
  opts.model.n_layers = 2;
  opts.model.n_heads = 4;
  opts.model.ffn_dim = 256;
  opts.model.text_vocab_size = 256;
  opts.model.patch_size = 32;
  opts.model.max_seq_len = 512;
  opts.train.total_steps = 200;
  opts.train.warmup_steps = 20;
  opts.train.peak_lr = 1e-3;
  opts.train.min_lr = 1e-4;
  opts.train.weight_decay = 0.1;
  opts.train.batch_size = 2;
  opts.seed = 2024;
  opts.data_source = "synthetic-labels";

  const fs::path dir_a = fs::temp_directory_path() / "solo_acceptance_smoke_a";
  const fs::path dir_b = fs::temp_directory_path() / "solo_acceptance_smoke_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  opts.out_dir = dir_a;
  const TrainResult run_a = train(packed, opts);

  require(run_a.log.size() == 200, "expected 200 logged steps");
  const double first = run_a.log.front().loss;
  const double last = run_a.log.back().loss;
  require(last <= 0.7 * first, "loss fell only from " + std::to_string(first) + " to " +
                                   std::to_string(last));
  for (const auto& rec : run_a.log) {
    require(rec.lr == lr_at_step(rec.step, opts.train), "lr log deviates from the schedule");
  }

  opts.out_dir = dir_b;
  const TrainResult run_b = train(packed, opts);
  require(slurp(run_a.loss_log_path) == slurp(run_b.loss_log_path),
          "seeded re-run loss logs differ");

  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  require(secs < 300.0, "smoke run exceeded 5 minutes");

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "loss %.3f -> %.3f (-%.0f%%), re-run bitwise identical",
                first, last, 100.0 * (1.0 - last / first));
  return buf;
}

// ---- C13: serialization -------------------------------------------------------------------

std::string c13_serialization() {
  std::mt19937_64 rng(1313);
  std::vector<PackedSequence> sequences;
  while (sequences.size() < 1000) {
    test::ExampleOptions opt;
    opt.patch_size = 4;
    opt.max_text = 30;
    opt.kind = sequences.size() % 2 == 0 ? ExampleKind::PretrainCaptioned
                                         : ExampleKind::Supervised;
    const auto stream = test::make_random_stream(rng, 5, opt);
    const auto seqs = pack_examples(
        stream, 64 + rng() % 128,
        opt.kind == ExampleKind::Supervised ? PackMode::Supervised : PackMode::Pretrain);
    sequences.insert(sequences.end(), seqs.begin(), seqs.end());
  }
  sequences.resize(1000);

  std::stringstream buf;
  write_packed_file(buf, sequences, 4);
  const std::string bytes = buf.str();
  {
    std::stringstream in(bytes);
    const auto back = read_packed_file(in);
    require(back.size() == sequences.size(), "record count after round trip");
    for (std::size_t i = 0; i < back.size(); ++i) {
      require(back[i] == sequences[i], "sequence " + std::to_string(i) + " not bit-identical");
    }
  }
  {
    std::stringstream in(bytes.substr(0, bytes.size() - 3));
    bool truncation = false;
    try {
      read_packed_file(in);
    } catch (const TruncationError&) {
      truncation = true;
    }
    require(truncation, "truncation not detected");
  }
  {
    std::string corrupted = bytes;
    corrupted[corrupted.size() - 4] ^= 0x01;  // last record's stored CRC
    std::stringstream in(corrupted);
    bool checksum = false;
    try {
      read_packed_file(in);
    } catch (const ChecksumError& e) {
      checksum = true;
      require(std::string(e.what()).find("record 999") != std::string::npos,
              "checksum error does not name the record");
    }
    require(checksum, "corruption not detected");
  }
  return "1000 sequences round-trip bit-exactly; truncation and checksum errors are typed";
}

}  // namespace

int main() {
  Harness h;
  h.criterion("C1  resize fidelity vs transcription oracle", c1_resize_fidelity);
  h.criterion("C2  resize invariants and quirks", c2_resize_invariants);
  h.criterion("C3  vision span layout law", c3_layout_law);
  h.criterion("C4  vision-token count 672x512 -> 336", c4_vision_token_count);
  h.criterion("C5  packing conservation + attention-mask oracle", c5_packing_and_masks);
  h.criterion("C6  loss-mask rule", c6_loss_mask_rule);
  h.criterion("C7  packing transparency", c7_packing_transparency);
  h.criterion("C8  segment isolation", c8_segment_isolation);
  h.criterion("C9  gradient fidelity", c9_gradient_fidelity);
  h.criterion("C10 LR schedule endpoints", c10_lr_endpoints);
  h.criterion("C11 token accounting", c11_token_accounting);
  h.criterion("C12 desk-scale learning smoke", c12_learning_smoke);
  h.criterion("C13 serialization round-trip and errors", c13_serialization);

  if (h.failures == 0) {
    std::printf("all 13 criteria passed\n");
  } else {
    std::printf("%d criteria FAILED\n", h.failures);
  }
  return h.failures;
}
