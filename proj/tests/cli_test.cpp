#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "solo/decode.hpp"
#include "solo/packing.hpp"
#include "solo/serialize.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace solo;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args, const fs::path& dir) {
  const fs::path out_file = dir / "cmd_output.txt";
  const std::string cmd =
      std::string(SOLO_CLI_PATH) + " " + args + " > " + out_file.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = status == -1 ? -1 : WEXITSTATUS(status);
  std::ifstream in(out_file);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path setup_workspace() {
  const fs::path dir = fs::temp_directory_path() / "solo_cli_test";
  fs::remove_all(dir);
  fs::create_directories(dir);

  // 40x30 resizes to 64x64: a 2x2 patch grid, 7 span elements.
  write_ppm(dir / "red.ppm", test::make_image(40, 30, 200, 10, 10));
  write_ppm(dir / "blue.ppm", test::make_image(40, 30, 10, 10, 200));

  std::ofstream manifest(dir / "manifest.jsonl");
  manifest
      << R"({"dataset":"caps","image_path":"red.ppm","text":"a red card","kind":"pretrain-captioned"})"
      << "\n"
      << R"({"dataset":"caps","image_path":"blue.ppm","text":"a blue card","kind":"pretrain-captioned"})"
      << "\n"
      << R"({"dataset":"textonly","text":"plain language keeps the model honest","kind":"pretrain-text"})"
      << "\n"
      << R"({"dataset":"caps","image_path":"missing.ppm","text":"broken","kind":"pretrain-captioned"})"
      << "\n";
  manifest.close();

  std::ofstream spec(dir / "mixture.json");
  spec << R"({
  "stage": 2,
  "seed": 7,
  "text_blend_multiplier": 1.0,
  "entries": [
    {"name": "caps", "path": ")"
       << (dir / "manifest.jsonl").string() << R"(", "modality": "image-text", "weight": 1.0},
    {"name": "textonly", "path": ")"
       << (dir / "manifest.jsonl").string() << R"(", "modality": "text-only", "weight": 1.0}
  ]
})";
  spec.close();
  return dir;
}

}  // namespace

TEST_CASE("cli pipeline: ingest, account, pack, inspect, train") {
  const fs::path dir = setup_workspace();

  SUBCASE("ingest fails closed on unexpected record failures") {
    const auto r = run_cli("ingest --manifest " + (dir / "manifest.jsonl").string() + " --out " +
                               (dir / "corpus_strict").string(),
                           dir);
    CHECK(r.exit_code == 1);
  }

  // Tolerate the known-bad record and build the corpus.
  const auto ingest = run_cli("ingest --manifest " + (dir / "manifest.jsonl").string() +
                                  " --out " + (dir / "corpus").string() + " --max-failures 1",
                              dir);
  REQUIRE(ingest.exit_code == 0);
  CHECK(fs::exists(dir / "corpus" / "caps.sexm"));
  CHECK(fs::exists(dir / "corpus" / "textonly.sexm"));
  CHECK(fs::exists(dir / "corpus" / "ingest_summary.json"));
  CHECK(ingest.output.find("failures 1") != std::string::npos);

  SUBCASE("empty manifest ingests to an empty corpus summary") {
    std::ofstream(dir / "empty.jsonl").close();
    const auto r = run_cli("ingest --manifest " + (dir / "empty.jsonl").string() + " --out " +
                               (dir / "corpus_empty").string(),
                           dir);
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("total records 0") != std::string::npos);
  }

  SUBCASE("account reports the synthetic corpus token counts") {
    // Accounting reads the manifest; the broken record aborts it, so use a
    // filtered manifest.
    std::ofstream clean(dir / "clean.jsonl");
    clean
        << R"({"dataset":"caps","image_path":"red.ppm","text":"a red card","kind":"pretrain-captioned"})"
        << "\n"
        << R"({"dataset":"textonly","text":"plain language keeps the model honest","kind":"pretrain-text"})"
        << "\n";
    clean.close();
    std::ofstream spec(dir / "clean_spec.json");
    spec << R"({"stage":1,"entries":[{"name":"caps","path":")" << (dir / "clean.jsonl").string()
         << R"(","modality":"image-text","weight":1.0}]})";
    spec.close();

    const auto r = run_cli("account --spec " + (dir / "clean_spec.json").string() + " --out " +
                               (dir / "report.json").string(),
                           dir);
    REQUIRE(r.exit_code == 0);
    // "a red card" (10 bytes) + "plain language keeps the model honest"
    // (37 bytes); the 40x30 image resizes to 64x64 = 2x2 grid = 4 patches.
    CHECK(r.output.find("caps") != std::string::npos);
    const std::string report = slurp(dir / "report.json");
    CHECK(report.find("\"vision_tokens\": 4") != std::string::npos);
    CHECK(report.find("\"text_tokens\": 47") != std::string::npos);
  }

  SUBCASE("missing manifest in a spec names the dataset") {
    std::ofstream spec(dir / "bad_spec.json");
    spec << R"({"stage":1,"entries":[{"name":"ghost","path":"/nonexistent.jsonl",)"
         << R"("modality":"text-only","weight":1.0}]})";
    spec.close();
    const auto r = run_cli("account --spec " + (dir / "bad_spec.json").string(), dir);
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("ghost") != std::string::npos);
  }

  // Pack deterministically, twice.
  const std::string pack_cmd = "pack --corpus " + (dir / "corpus").string() + " --spec " +
                               (dir / "mixture.json").string() +
                               " --seq-len 64 --seed 11 --examples 12 --out ";
  const auto pack1 = run_cli(pack_cmd + (dir / "packed_a.spkd").string(), dir);
  REQUIRE(pack1.exit_code == 0);
  const auto pack2 = run_cli(pack_cmd + (dir / "packed_b.spkd").string(), dir);
  REQUIRE(pack2.exit_code == 0);
  CHECK(slurp(dir / "packed_a.spkd") == slurp(dir / "packed_b.spkd"));
  CHECK(!slurp(dir / "packed_a.spkd").empty());

  SUBCASE("inspect prints segment and span geometry") {
    const auto r = run_cli("inspect --packed " + (dir / "packed_a.spkd").string() + " --limit 2",
                           dir);
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("sequence 0") != std::string::npos);
    CHECK(r.output.find("segments") != std::string::npos);
    CHECK(r.output.find("spans 1") != std::string::npos);
  }

  SUBCASE("inspect shows a single-patch span as 3 span elements") {
    // A 1x1 grid cannot come out of the resize path, so write one directly.
    PackedSequence seq;
    seq.num_segments = 1;
    seq.elements = {TokenElement::special(SpecialToken::VisionBegin),
                    TokenElement::patch(std::vector<std::uint8_t>(4 * 4 * 3, 9)),
                    TokenElement::special(SpecialToken::VisionEnd), TokenElement::pad()};
    seq.segment_ids = {0, 0, 0, 1};
    seq.loss_mask = {0, 0, 0, 0};
    std::ofstream out(dir / "single.spkd", std::ios::binary);
    write_packed_file(out, std::vector<PackedSequence>{seq}, 4);
    out.close();
    const auto r = run_cli("inspect --packed " + (dir / "single.spkd").string(), dir);
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("spans 1") != std::string::npos);
    CHECK(r.output.find("span elements 3") != std::string::npos);
    CHECK(r.output.find("patches 1") != std::string::npos);
  }

  // Train a few steps; the run must exit cleanly, write artifacts, and be
  // seed-reproducible.
  const std::string train_cmd = "train --packed " + (dir / "packed_a.spkd").string() +
                                " --steps 5 --batch-size 1 --warmup-steps 2 --seed 3 " +
                                "--d-model 16 --n-layers 1 --n-heads 2 --ffn-dim 32 --out ";
  const auto train1 = run_cli(train_cmd + (dir / "run_a").string(), dir);
  REQUIRE(train1.exit_code == 0);
  CHECK(fs::exists(dir / "run_a" / "checkpoint.sckp"));
  CHECK(fs::exists(dir / "run_a" / "loss_log.jsonl"));

  const auto train2 = run_cli(train_cmd + (dir / "run_b").string(), dir);
  REQUIRE(train2.exit_code == 0);
  CHECK(slurp(dir / "run_a" / "loss_log.jsonl") == slurp(dir / "run_b" / "loss_log.jsonl"));

  fs::remove_all(dir);
}
