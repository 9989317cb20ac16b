#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "solo/model.hpp"

namespace solo {

// Checkpoint container: magic "SCKP", u32 version, the full ModelConfig and
// TrainConfig, then named tensors (u32 name length + UTF-8 name, u8 dtype
// (0 = f64), u32 rank, u64 dims, raw little-endian data) and a CRC32 trailer
// over everything before it. Writes go to a temp file renamed into place.

void save_checkpoint(const std::filesystem::path& file, const ModelParams& params,
                     const TrainConfig& train_cfg);
ModelParams load_checkpoint(const std::filesystem::path& file,
                            TrainConfig* train_cfg = nullptr);

struct TrainOptions {
  ModelConfig model;
  TrainConfig train;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  std::string data_source;  // provenance used in diagnostics
};

struct StepRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double text_loss = 0.0;
  double vision_loss = 0.0;
};

struct TrainResult {
  std::filesystem::path checkpoint_path;
  std::filesystem::path loss_log_path;
  std::vector<StepRecord> log;
};

/// AdamW training over packed sequences. Batches cycle through `data` in
/// order; the loss is the mean cross entropy over every active position in
/// the batch. Deterministic for a fixed seed, data and configuration: a
/// re-run writes a byte-identical loss log. Aborts with diagnostics when the
/// loss stops being finite.
TrainResult train(std::span<const PackedSequence> data, const TrainOptions& opts);

/// One loss-log line, formatted losslessly (shared by train and tests).
std::string format_step_record(const StepRecord& rec);

}  // namespace solo
