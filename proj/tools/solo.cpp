// solo: unified vision-language data pipeline and desk-scale trainer.
//
// Subcommands: ingest, account, pack, train, inspect. See README.md.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include "solo/decode.hpp"
#include "solo/log.hpp"
#include "solo/manifest.hpp"
#include "solo/mixture.hpp"
#include "solo/model.hpp"
#include "solo/packing.hpp"
#include "solo/serialize.hpp"
#include "solo/tokenizer.hpp"
#include "solo/train.hpp"

namespace fs = std::filesystem;
using namespace solo;

namespace {

std::string sanitize_dataset_name(const std::string& name) {
  std::string out = name;
  for (char& c : out) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    if (!ok) c = '_';
  }
  return out.empty() ? "_" : out;
}

struct IngestArgs {
  std::string manifest;
  std::string out_dir;
  std::int64_t patch_size = 32;
  std::int64_t max_resolution = 1024;
  std::string vocab_file;
  unsigned jobs = 0;
  std::uint64_t max_failures = 0;
};

int run_ingest(const IngestArgs& args) {
  const PreprocessConfig cfg{args.patch_size, args.max_resolution};
  cfg.validate();
  auto tokenizer = make_tokenizer(
      args.vocab_file.empty() ? std::nullopt : std::optional<fs::path>(args.vocab_file));

  const fs::path manifest_path(args.manifest);
  const fs::path base_dir = manifest_path.parent_path();

  struct PendingRecord {
    std::size_t line_number = 0;
    std::string line;
  };
  std::vector<PendingRecord> pending;
  for_each_manifest_line(manifest_path, [&](std::size_t lineno, const std::string& line) {
    pending.push_back({lineno, line});
  });

  struct Slot {
    std::optional<Example> example;
    std::string error;
  };
  std::vector<Slot> slots(pending.size());

  // Records are independent; a small pool works through them and the results
  // are committed in manifest order below.
  const unsigned jobs = args.jobs != 0
                            ? args.jobs
                            : std::max(1u, std::thread::hardware_concurrency());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= pending.size()) return;
      try {
        const ManifestRecord rec = parse_manifest_line(pending[i].line);
        RawImage image;
        const RawImage* image_ptr = nullptr;
        if (rec.image_path.has_value()) {
          fs::path img(*rec.image_path);
          if (img.is_relative()) img = base_dir / img;
          image = decode_image(img);
          image_ptr = &image;
        }
        slots[i].example = build_example(rec, *tokenizer, cfg, image_ptr);
      } catch (const std::exception& e) {
        slots[i].error = e.what();
      }
    }
  };
  {
    std::vector<std::thread> threads;
    for (unsigned j = 0; j + 1 < jobs; ++j) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
  }

  fs::create_directories(args.out_dir);
  std::map<std::string, std::unique_ptr<std::ofstream>> streams;
  std::map<std::string, std::unique_ptr<ExampleWriter>> writers;
  struct Tally {
    std::uint64_t written = 0, failed = 0, elements = 0, patches = 0;
  };
  std::map<std::string, Tally> tallies;

  std::uint64_t failures = 0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i].error.empty()) {
      ++failures;
      std::string dataset = "?";
      try {
        dataset = parse_manifest_line(pending[i].line).dataset;
      } catch (...) {
      }
      tallies[dataset].failed += 1;
      spdlog::warn("line {}: skipped: {}", pending[i].line_number, slots[i].error);
      continue;
    }
    const Example& ex = *slots[i].example;
    auto it = writers.find(ex.source_dataset);
    if (it == writers.end()) {
      const fs::path file =
          fs::path(args.out_dir) / (sanitize_dataset_name(ex.source_dataset) + ".sexm");
      auto stream = std::make_unique<std::ofstream>(file, std::ios::binary | std::ios::trunc);
      if (!*stream) throw Error("cannot write " + file.string());
      auto writer = std::make_unique<ExampleWriter>(
          *stream, static_cast<std::uint32_t>(args.patch_size), tokenizer->vocab_size());
      it = writers.emplace(ex.source_dataset, std::move(writer)).first;
      streams.emplace(ex.source_dataset, std::move(stream));
    }
    it->second->write(ex);
    Tally& tally = tallies[ex.source_dataset];
    tally.written += 1;
    tally.elements += ex.elements.size();
    for (const auto& e : ex.elements) tally.patches += e.is(TokenElement::Kind::Patch);
  }
  writers.clear();
  streams.clear();

  nlohmann::json summary;
  summary["records"] = pending.size();
  summary["failures"] = failures;
  summary["datasets"] = nlohmann::json::object();
  std::printf("dataset                records   failed    elements    patches\n");
  for (const auto& [name, tally] : tallies) {
    std::printf("%-22s %-9llu %-9llu %-11llu %llu\n", name.c_str(),
                static_cast<unsigned long long>(tally.written),
                static_cast<unsigned long long>(tally.failed),
                static_cast<unsigned long long>(tally.elements),
                static_cast<unsigned long long>(tally.patches));
    summary["datasets"][name] = {{"written", tally.written},
                                 {"failed", tally.failed},
                                 {"elements", tally.elements},
                                 {"patches", tally.patches}};
  }
  std::printf("total records %zu, failures %llu\n", pending.size(),
              static_cast<unsigned long long>(failures));
  std::ofstream summary_out(fs::path(args.out_dir) / "ingest_summary.json");
  summary_out << summary.dump(2) << "\n";

  if (failures > args.max_failures) {
    spdlog::error("{} record(s) failed (allowed {})", failures, args.max_failures);
    return 1;
  }
  return 0;
}

struct AccountArgs {
  std::string spec_file;
  std::int64_t patch_size = 32;
  std::int64_t max_resolution = 1024;
  std::string vocab_file;
  std::string out_file;
  int stage_override = 0;
  double multiplier_override = 0.0;
};

int run_account(const AccountArgs& args) {
  MixtureSpec spec = MixtureSpec::load(args.spec_file);
  if (args.stage_override != 0) spec.stage = args.stage_override;
  if (args.multiplier_override > 0.0) spec.text_blend_multiplier = args.multiplier_override;
  spec.validate();

  const PreprocessConfig cfg{args.patch_size, args.max_resolution};
  auto tokenizer = make_tokenizer(
      args.vocab_file.empty() ? std::nullopt : std::optional<fs::path>(args.vocab_file));
  const TokenAccount acct = account_tokens(spec.entries, *tokenizer, cfg);

  std::printf("stage %d  text-blend x%g\n", spec.stage, spec.text_blend_multiplier);
  std::printf("%-22s %-9s %-9s %-13s %-13s %s\n", "dataset", "records", "images", "text_tokens",
              "vision_tokens", "special");
  for (const auto& d : acct.per_dataset) {
    std::printf("%-22s %-9llu %-9llu %-13llu %-13llu %llu\n", d.name.c_str(),
                static_cast<unsigned long long>(d.records),
                static_cast<unsigned long long>(d.images),
                static_cast<unsigned long long>(d.text_tokens),
                static_cast<unsigned long long>(d.vision_tokens),
                static_cast<unsigned long long>(d.special_tokens));
  }
  std::printf("%-22s %-9s %-9s %-13llu %-13llu %llu\n", "TOTAL", "", "",
              static_cast<unsigned long long>(acct.text_tokens()),
              static_cast<unsigned long long>(acct.vision_tokens()),
              static_cast<unsigned long long>(acct.special_tokens()));
  std::printf("text %.2f%%  vision %.2f%%\n", acct.text_pct(), acct.vision_pct());

  if (!args.out_file.empty()) {
    nlohmann::json j;
    j["stage"] = spec.stage;
    j["text_pct"] = acct.text_pct();
    j["vision_pct"] = acct.vision_pct();
    j["text_tokens"] = acct.text_tokens();
    j["vision_tokens"] = acct.vision_tokens();
    j["special_tokens"] = acct.special_tokens();
    j["datasets"] = nlohmann::json::array();
    for (const auto& d : acct.per_dataset) {
      j["datasets"].push_back({{"name", d.name},
                               {"records", d.records},
                               {"images", d.images},
                               {"text_tokens", d.text_tokens},
                               {"vision_tokens", d.vision_tokens},
                               {"special_tokens", d.special_tokens}});
    }
    std::ofstream out(args.out_file);
    if (!out) throw Error("cannot write report " + args.out_file);
    out << j.dump(2) << "\n";
  }
  return 0;
}

struct PackArgs {
  std::string corpus_dir;
  std::string spec_file;
  std::string out_file;
  std::size_t seq_len = kDefaultMaxSequenceLength;
  std::uint64_t seed = 0;
  std::string mode = "pretrain";
  std::uint64_t examples = 0;
  int stage_override = 0;
  double multiplier_override = 0.0;
};

std::vector<Example> load_corpus_file(const fs::path& file, std::uint32_t& patch_size) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IngestionError("cannot open corpus file " + file.string());
  ExampleReader reader(in);
  if (patch_size == 0) {
    patch_size = reader.patch_size();
  } else if (patch_size != reader.patch_size()) {
    throw IngestionError("corpus files disagree on patch size (" + file.string() + ")");
  }
  std::vector<Example> out;
  while (auto ex = reader.next()) out.push_back(std::move(*ex));
  return out;
}

int run_pack(const PackArgs& args) {
  const PackMode mode = args.mode == "supervised" ? PackMode::Supervised : PackMode::Pretrain;
  std::uint32_t patch_size = 0;

  std::vector<std::vector<Example>> datasets;
  std::vector<std::string> names;
  std::optional<MixtureSpec> spec;
  if (!args.spec_file.empty()) {
    spec = MixtureSpec::load(args.spec_file);
    if (args.stage_override != 0) spec->stage = args.stage_override;
    if (args.multiplier_override > 0.0) spec->text_blend_multiplier = args.multiplier_override;
    spec->seed = args.seed;
    for (const auto& entry : spec->entries) {
      const fs::path file =
          fs::path(args.corpus_dir) / (sanitize_dataset_name(entry.name) + ".sexm");
      datasets.push_back(load_corpus_file(file, patch_size));
      names.push_back(entry.name);
      if (datasets.back().empty()) {
        throw IngestionError("dataset '" + entry.name + "' has no examples in " + file.string());
      }
    }
  } else {
    std::vector<fs::path> files;
    for (const auto& de : fs::directory_iterator(args.corpus_dir)) {
      if (de.path().extension() == ".sexm") files.push_back(de.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IngestionError("no .sexm corpus files in " + args.corpus_dir);
    for (const auto& f : files) {
      datasets.push_back(load_corpus_file(f, patch_size));
      names.push_back(f.stem().string());
    }
  }

  std::ofstream out(args.out_file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + args.out_file);
  PackedWriter writer(out, patch_size);
  Packer packer(args.seq_len, mode);
  std::vector<PackedSequence> ready;
  std::uint64_t packed_examples = 0;

  auto feed = [&](const Example& ex) {
    packer.add(ex, ready);
    for (auto& seq : ready) writer.write(seq);
    ready.clear();
    ++packed_examples;
  };

  if (spec.has_value()) {
    std::uint64_t total = args.examples;
    if (total == 0) {
      for (const auto& ds : datasets) total += ds.size();
    }
    for (const ScheduleDraw& draw : plan_schedule(*spec, total)) {
      const auto& ds = datasets[draw.dataset_index];
      feed(ds[draw.draw_ordinal % ds.size()]);
    }
  } else {
    for (const auto& ds : datasets) {
      for (const auto& ex : ds) feed(ex);
    }
  }
  if (auto last = packer.flush()) writer.write(*last);

  std::printf("packed %llu examples into %zu sequences of %zu (%s mode) -> %s\n",
              static_cast<unsigned long long>(packed_examples), writer.records_written(),
              args.seq_len, args.mode.c_str(), args.out_file.c_str());
  return 0;
}

struct TrainArgs {
  std::string packed_file;
  std::string out_dir;
  std::size_t steps = 200;
  std::size_t batch_size = 2;
  std::uint64_t seed = 0;
  double peak_lr = 5e-5;
  double min_lr = 5e-6;
  std::size_t warmup_steps = 200;
  double weight_decay = 0.1;
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ffn_dim = 256;
  std::uint32_t text_vocab_size = 256;
  bool tie_embeddings = false;
  std::size_t checkpoint_every = 0;
};

int run_train(const TrainArgs& args) {
  std::ifstream in(args.packed_file, std::ios::binary);
  if (!in) throw IngestionError("cannot open packed file " + args.packed_file);
  std::uint32_t patch_size = 0;
  const std::vector<PackedSequence> data = read_packed_file(in, &patch_size);
  if (data.empty()) throw InvalidInputError("packed file holds no sequences");

  std::size_t max_len = 0;
  for (const auto& s : data) max_len = std::max(max_len, s.size());

  TrainOptions opts;
  opts.model.d_model = args.d_model;
  opts.model.n_layers = args.n_layers;
  opts.model.n_heads = args.n_heads;
  opts.model.ffn_dim = args.ffn_dim;
  opts.model.text_vocab_size = args.text_vocab_size;
  opts.model.patch_size = patch_size;
  opts.model.max_seq_len = max_len;
  opts.model.tie_embeddings = args.tie_embeddings;
  opts.train.peak_lr = args.peak_lr;
  opts.train.min_lr = args.min_lr;
  opts.train.warmup_steps = std::min(args.warmup_steps, args.steps > 0 ? args.steps - 1 : 0);
  opts.train.total_steps = args.steps;
  opts.train.weight_decay = args.weight_decay;
  opts.train.batch_size = args.batch_size;
  opts.train.checkpoint_every = args.checkpoint_every;
  opts.seed = args.seed;
  opts.out_dir = args.out_dir;
  opts.data_source = args.packed_file;

  const TrainResult result = train(data, opts);
  std::printf("trained %zu steps; final loss %.6f; checkpoint %s; loss log %s\n",
              result.log.size(), result.log.empty() ? 0.0 : result.log.back().loss,
              result.checkpoint_path.string().c_str(), result.loss_log_path.string().c_str());
  return 0;
}

struct InspectArgs {
  std::string packed_file;
  std::size_t limit = 0;
};

int run_inspect(const InspectArgs& args) {
  std::ifstream in(args.packed_file, std::ios::binary);
  if (!in) throw IngestionError("cannot open packed file " + args.packed_file);
  PackedReader reader(in);
  std::printf("packed file %s, patch size %u\n", args.packed_file.c_str(), reader.patch_size());

  std::size_t index = 0;
  while (auto seq = reader.next()) {
    if (args.limit != 0 && index >= args.limit) break;
    std::size_t pads = 0, active = 0;
    for (std::size_t t = 0; t < seq->size(); ++t) {
      pads += seq->elements[t].is(TokenElement::Kind::Pad);
      active += seq->loss_mask[t] != 0;
    }
    std::printf("sequence %zu: len %zu, segments %u, pad %zu, loss %zu/%zu (%.1f%%)\n", index,
                seq->size(), seq->num_segments, pads, active, seq->size(),
                100.0 * static_cast<double>(active) / static_cast<double>(seq->size()));

    for (std::uint32_t seg = 0; seg < seq->num_segments; ++seg) {
      std::size_t len = 0, text = 0, spans = 0, patches = 0, separators = 0;
      std::size_t span_elements = 0;
      for (std::size_t t = 0; t < seq->size(); ++t) {
        if (seq->segment_ids[t] != seg) continue;
        ++len;
        const TokenElement& e = seq->elements[t];
        if (e.is(TokenElement::Kind::Text)) ++text;
        if (e.is(TokenElement::Kind::Patch)) {
          ++patches;
          ++span_elements;
        }
        if (e.is(TokenElement::Kind::Special)) {
          ++span_elements;
          if (e.special_kind() == SpecialToken::VisionBegin) ++spans;
          if (e.special_kind() == SpecialToken::VRowSep) ++separators;
        }
      }
      std::printf("  segment %u: %zu elements, text %zu, spans %zu", seg, len, text, spans);
      if (spans > 0) {
        const std::size_t rows = separators + spans;  // rows-1 separators per span
        std::printf(", span elements %zu, patches %zu, rows %zu, cols %zu", span_elements,
                    patches, rows, rows > 0 ? patches / rows : 0);
      }
      std::printf("\n");
    }
    ++index;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();

  CLI::App app{"solo: unified vision-language data pipeline and desk-scale trainer"};
  app.require_subcommand(1);

  IngestArgs ingest_args;
  auto* ingest = app.add_subcommand("ingest", "Decode, resize and tokenize a corpus manifest");
  ingest->add_option("--manifest", ingest_args.manifest, "JSONL corpus manifest")->required();
  ingest->add_option("--out", ingest_args.out_dir, "output corpus directory")->required();
  ingest->add_option("--patch-size", ingest_args.patch_size, "patch size P")->capture_default_str();
  ingest->add_option("--max-resolution", ingest_args.max_resolution, "max resolution M")
      ->capture_default_str();
  ingest->add_option("--vocab", ingest_args.vocab_file, "external vocabulary file");
  ingest->add_option("--jobs", ingest_args.jobs, "worker threads (0 = hardware)");
  ingest->add_option("--max-failures", ingest_args.max_failures,
                     "tolerated per-record failures before a nonzero exit");

  AccountArgs account_args;
  auto* account = app.add_subcommand("account", "Token accounting for a mixture spec");
  account->add_option("--spec", account_args.spec_file, "mixture spec JSON")->required();
  account->add_option("--patch-size", account_args.patch_size, "patch size P")
      ->capture_default_str();
  account->add_option("--max-resolution", account_args.max_resolution, "max resolution M")
      ->capture_default_str();
  account->add_option("--vocab", account_args.vocab_file, "external vocabulary file");
  account->add_option("--out", account_args.out_file, "machine-readable report path");
  account->add_option("--stage", account_args.stage_override, "override the spec's stage")
      ->check(CLI::Range(1, 3));
  account->add_option("--text-blend-multiplier", account_args.multiplier_override,
                      "override the spec's text blend multiplier");

  PackArgs pack_args;
  auto* pack = app.add_subcommand("pack", "Pack ingested examples into fixed-length sequences");
  pack->add_option("--corpus", pack_args.corpus_dir, "ingested corpus directory")->required();
  pack->add_option("--spec", pack_args.spec_file, "mixture spec JSON (omit to pack everything)");
  pack->add_option("--out", pack_args.out_file, "output packed file")->required();
  pack->add_option("--seq-len", pack_args.seq_len, "packed sequence length")
      ->capture_default_str();
  pack->add_option("--seed", pack_args.seed, "schedule seed")->capture_default_str();
  pack->add_option("--mode", pack_args.mode, "pretrain | supervised")
      ->check(CLI::IsMember({"pretrain", "supervised"}))
      ->capture_default_str();
  pack->add_option("--examples", pack_args.examples, "schedule draws (0 = one epoch)");
  pack->add_option("--stage", pack_args.stage_override, "override the spec's stage")
      ->check(CLI::Range(1, 3));
  pack->add_option("--text-blend-multiplier", pack_args.multiplier_override,
                   "override the spec's text blend multiplier");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train the desk-scale transformer");
  train_cmd->add_option("--packed", train_args.packed_file, "packed sequence file")->required();
  train_cmd->add_option("--out", train_args.out_dir, "output directory")->required();
  train_cmd->add_option("--steps", train_args.steps, "training steps")->capture_default_str();
  train_cmd->add_option("--batch-size", train_args.batch_size, "sequences per step")
      ->capture_default_str();
  train_cmd->add_option("--seed", train_args.seed, "init seed")->capture_default_str();
  train_cmd->add_option("--peak-lr", train_args.peak_lr, "peak learning rate")
      ->capture_default_str();
  train_cmd->add_option("--min-lr", train_args.min_lr, "final learning rate")
      ->capture_default_str();
  train_cmd->add_option("--warmup-steps", train_args.warmup_steps, "warmup steps")
      ->capture_default_str();
  train_cmd->add_option("--weight-decay", train_args.weight_decay, "decoupled weight decay")
      ->capture_default_str();
  train_cmd->add_option("--d-model", train_args.d_model, "model width")->capture_default_str();
  train_cmd->add_option("--n-layers", train_args.n_layers, "decoder layers")
      ->capture_default_str();
  train_cmd->add_option("--n-heads", train_args.n_heads, "attention heads")
      ->capture_default_str();
  train_cmd->add_option("--ffn-dim", train_args.ffn_dim, "feed-forward width")
      ->capture_default_str();
  train_cmd->add_option("--text-vocab-size", train_args.text_vocab_size, "text vocabulary size")
      ->capture_default_str();
  train_cmd->add_flag("--tie-embeddings", train_args.tie_embeddings,
                      "tie the output head to the embedding table");
  train_cmd->add_option("--checkpoint-every", train_args.checkpoint_every,
                        "periodic checkpoint interval (0 = final only)");

  InspectArgs inspect_args;
  auto* inspect = app.add_subcommand("inspect", "Dump packed-sequence structure");
  inspect->add_option("--packed", inspect_args.packed_file, "packed sequence file")->required();
  inspect->add_option("--limit", inspect_args.limit, "max sequences to print (0 = all)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) return run_ingest(ingest_args);
    if (account->parsed()) return run_account(account_args);
    if (pack->parsed()) return run_pack(pack_args);
    if (train_cmd->parsed()) return run_train(train_args);
    if (inspect->parsed()) return run_inspect(inspect_args);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("unexpected: {}", e.what());
    return 1;
  }
  return 0;
}
