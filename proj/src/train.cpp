#include "solo/train.hpp"

#include <zlib.h>

#include <bit>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "solo/kernels.hpp"
#include "solo/log.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts are unsupported");

namespace solo {

namespace {

constexpr char kCheckpointMagic[4] = {'S', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& buf, T v) {
  const std::size_t at = buf.size();
  buf.resize(at + sizeof(T));
  std::memcpy(buf.data() + at, &v, sizeof(T));
}

struct Cursor {
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;

  template <typename T>
  T get() {
    if (buf.size() - pos < sizeof(T)) throw TruncationError("checkpoint ends mid-field");
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  const std::uint8_t* raw(std::size_t n) {
    if (buf.size() - pos < n) throw TruncationError("checkpoint ends mid-field");
    const std::uint8_t* p = buf.data() + pos;
    pos += n;
    return p;
  }
};

void put_model_config(std::vector<std::uint8_t>& buf, const ModelConfig& c) {
  put<std::uint64_t>(buf, c.d_model);
  put<std::uint64_t>(buf, c.n_layers);
  put<std::uint64_t>(buf, c.n_heads);
  put<std::uint64_t>(buf, c.ffn_dim);
  put<std::uint32_t>(buf, c.text_vocab_size);
  put<std::uint64_t>(buf, c.patch_size);
  put<std::uint64_t>(buf, c.max_seq_len);
  put<std::uint8_t>(buf, c.tie_embeddings ? 1 : 0);
  put<double>(buf, c.rope_theta);
  put<double>(buf, c.norm_eps);
}

ModelConfig get_model_config(Cursor& cur) {
  ModelConfig c;
  c.d_model = cur.get<std::uint64_t>();
  c.n_layers = cur.get<std::uint64_t>();
  c.n_heads = cur.get<std::uint64_t>();
  c.ffn_dim = cur.get<std::uint64_t>();
  c.text_vocab_size = cur.get<std::uint32_t>();
  c.patch_size = cur.get<std::uint64_t>();
  c.max_seq_len = cur.get<std::uint64_t>();
  c.tie_embeddings = cur.get<std::uint8_t>() != 0;
  c.rope_theta = cur.get<double>();
  c.norm_eps = cur.get<double>();
  return c;
}

void put_train_config(std::vector<std::uint8_t>& buf, const TrainConfig& c) {
  put<double>(buf, c.peak_lr);
  put<double>(buf, c.min_lr);
  put<std::uint64_t>(buf, c.warmup_steps);
  put<std::uint64_t>(buf, c.total_steps);
  put<double>(buf, c.weight_decay);
  put<std::uint64_t>(buf, c.batch_size);
  put<double>(buf, c.adam_beta1);
  put<double>(buf, c.adam_beta2);
  put<double>(buf, c.adam_eps);
  put<std::uint64_t>(buf, c.checkpoint_every);
}

TrainConfig get_train_config(Cursor& cur) {
  TrainConfig c;
  c.peak_lr = cur.get<double>();
  c.min_lr = cur.get<double>();
  c.warmup_steps = cur.get<std::uint64_t>();
  c.total_steps = cur.get<std::uint64_t>();
  c.weight_decay = cur.get<double>();
  c.batch_size = cur.get<std::uint64_t>();
  c.adam_beta1 = cur.get<double>();
  c.adam_beta2 = cur.get<double>();
  c.adam_eps = cur.get<double>();
  c.checkpoint_every = cur.get<std::uint64_t>();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const ModelParams& params,
                     const TrainConfig& train_cfg) {
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), kCheckpointMagic, kCheckpointMagic + 4);
  put<std::uint32_t>(buf, kCheckpointVersion);
  put_model_config(buf, params.config);
  put_train_config(buf, train_cfg);

  const auto tensors = params.tensors();
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(tensors.size()));
  for (const Tensor* t : tensors) {
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(t->name.size()));
    buf.insert(buf.end(), t->name.begin(), t->name.end());
    put<std::uint8_t>(buf, 0);  // dtype f64
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(t->rank()));
    for (std::size_t dim : t->shape) put<std::uint64_t>(buf, dim);
    const std::size_t at = buf.size();
    buf.resize(at + t->size() * sizeof(double));
    std::memcpy(buf.data() + at, t->data.data(), t->size() * sizeof(double));
  }
  const auto crc = static_cast<std::uint32_t>(::crc32(0L, buf.data(), static_cast<uInt>(buf.size())));
  put<std::uint32_t>(buf, crc);

  // Write-temp-rename keeps checkpoints atomic.
  const std::filesystem::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error("checkpoint write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, file);
}

ModelParams load_checkpoint(const std::filesystem::path& file, TrainConfig* train_cfg) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + file.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (buf.size() < 12) throw TruncationError("checkpoint too small");
  if (std::memcmp(buf.data(), kCheckpointMagic, 4) != 0) {
    throw MagicMismatchError("not a checkpoint file (bad magic)");
  }
  std::uint32_t stored_crc = 0;
  std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
  const auto crc = static_cast<std::uint32_t>(
      ::crc32(0L, buf.data(), static_cast<uInt>(buf.size() - 4)));
  if (stored_crc != crc) throw ChecksumError("checkpoint CRC32 mismatch");

  Cursor cur{buf, 4};
  const auto version = cur.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionMismatchError("checkpoint version " + std::to_string(version) + " unsupported");
  }
  const ModelConfig model_cfg = get_model_config(cur);
  const TrainConfig tc = get_train_config(cur);
  if (train_cfg != nullptr) *train_cfg = tc;

  ModelParams params = ModelParams::zeros_like(model_cfg);
  auto tensors = params.tensors();
  const auto count = cur.get<std::uint32_t>();
  if (count != tensors.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, expected " +
                      std::to_string(tensors.size()));
  }
  for (Tensor* t : tensors) {
    const auto name_len = cur.get<std::uint32_t>();
    const std::string name(reinterpret_cast<const char*>(cur.raw(name_len)), name_len);
    if (name != t->name) {
      throw FormatError("checkpoint tensor '" + name + "' does not match expected '" + t->name +
                        "'");
    }
    const auto dtype = cur.get<std::uint8_t>();
    if (dtype != 0) throw FormatError("unsupported tensor dtype " + std::to_string(dtype));
    const auto rank = cur.get<std::uint32_t>();
    if (rank != t->rank()) throw FormatError("tensor '" + name + "' rank mismatch");
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto dim = cur.get<std::uint64_t>();
      if (dim != t->shape[i]) throw FormatError("tensor '" + name + "' shape mismatch");
      n *= dim;
    }
    std::memcpy(t->data.data(), cur.raw(n * sizeof(double)), n * sizeof(double));
  }
  return params;
}

std::string format_step_record(const StepRecord& rec) {
  char line[256];
  std::snprintf(line, sizeof(line),
                "{\"step\":%zu,\"lr\":%.17g,\"loss\":%.17g,\"text_loss\":%.17g,"
                "\"vision_loss\":%.17g}",
                rec.step, rec.lr, rec.loss, rec.text_loss, rec.vision_loss);
  return line;
}

TrainResult train(std::span<const PackedSequence> data, const TrainOptions& opts) {
  opts.model.validate();
  opts.train.validate();
  if (data.empty()) throw InvalidInputError("training needs at least one packed sequence");

  std::filesystem::create_directories(opts.out_dir);
  TrainResult result;
  result.checkpoint_path = opts.out_dir / "checkpoint.sckp";
  result.loss_log_path = opts.out_dir / "loss_log.jsonl";

  ModelParams params = ModelParams::init(opts.model, opts.seed);
  ModelParams grads = ModelParams::zeros_like(opts.model);
  ModelParams m = ModelParams::zeros_like(opts.model);
  ModelParams v = ModelParams::zeros_like(opts.model);
  auto param_tensors = params.tensors();
  auto grad_tensors = grads.tensors();
  auto m_tensors = m.tensors();
  auto v_tensors = v.tensors();

  std::ofstream log_out(result.loss_log_path, std::ios::trunc);
  if (!log_out) throw Error("cannot write loss log " + result.loss_log_path.string());

  spdlog::info("training: {} sequences, {} steps, batch {}, kernels backend {}", data.size(),
               opts.train.total_steps, opts.train.batch_size,
               std::string(kernels::active_backend()));

  const std::size_t batch = opts.train.batch_size;
  for (std::size_t step = 1; step <= opts.train.total_steps; ++step) {
    const double lr = lr_at_step(step, opts.train);

    for (Tensor* g : grad_tensors) std::fill(g->data.begin(), g->data.end(), 0.0);
    double ce_sum = 0.0, ce_text = 0.0, ce_vision = 0.0;
    std::size_t active = 0, text_active = 0, vision_active = 0;
    std::size_t first_seq = (step - 1) * batch;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t seq_index = (first_seq + b) % data.size();
      // Accumulate raw-sum gradients; the 1/active scaling happens once below.
      const LossBreakdown bd = loss_and_gradients(data[seq_index], params, grads, 1.0);
      ce_sum += bd.total * static_cast<double>(bd.active);
      ce_text += bd.text_only * static_cast<double>(bd.text_active);
      ce_vision += bd.vision_cond * static_cast<double>(bd.vision_active);
      active += bd.active;
      text_active += bd.text_active;
      vision_active += bd.vision_active;
    }
    const double loss = active == 0 ? 0.0 : ce_sum / static_cast<double>(active);
    if (!std::isfinite(loss)) {
      throw Error("non-finite loss at step " + std::to_string(step) + " (batch sequences " +
                  std::to_string(first_seq % data.size()) + ".." +
                  std::to_string((first_seq + batch - 1) % data.size()) + " from '" +
                  opts.data_source + "')");
    }
    if (active > 0) {
      const double inv = 1.0 / static_cast<double>(active);
      for (Tensor* g : grad_tensors) kernels::scale(inv, g->data.data(), g->size());
    }

    // AdamW with decoupled weight decay on matrices only.
    const double bc1 = 1.0 - std::pow(opts.train.adam_beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(opts.train.adam_beta2, static_cast<double>(step));
    for (std::size_t ti = 0; ti < param_tensors.size(); ++ti) {
      Tensor* p = param_tensors[ti];
      const Tensor* g = grad_tensors[ti];
      Tensor* mt = m_tensors[ti];
      Tensor* vt = v_tensors[ti];
      const double wd = p->rank() >= 2 ? opts.train.weight_decay : 0.0;
      for (std::size_t i = 0; i < p->size(); ++i) {
        const double gi = g->data[i];
        mt->data[i] = opts.train.adam_beta1 * mt->data[i] + (1.0 - opts.train.adam_beta1) * gi;
        vt->data[i] = opts.train.adam_beta2 * vt->data[i] + (1.0 - opts.train.adam_beta2) * gi * gi;
        const double mhat = mt->data[i] / bc1;
        const double vhat = vt->data[i] / bc2;
        p->data[i] -= lr * (mhat / (std::sqrt(vhat) + opts.train.adam_eps) + wd * p->data[i]);
      }
    }

    StepRecord rec;
    rec.step = step;
    rec.lr = lr;
    rec.loss = loss;
    rec.text_loss = text_active == 0 ? 0.0 : ce_text / static_cast<double>(text_active);
    rec.vision_loss = vision_active == 0 ? 0.0 : ce_vision / static_cast<double>(vision_active);
    log_out << format_step_record(rec) << "\n";
    result.log.push_back(rec);

    if (opts.train.checkpoint_every > 0 && step % opts.train.checkpoint_every == 0 &&
        step != opts.train.total_steps) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_step_%06zu.sckp", step);
      save_checkpoint(opts.out_dir / name, params, opts.train);
    }
    if (step % 50 == 0 || step == opts.train.total_steps) {
      spdlog::debug("step {} lr {:.3e} loss {:.4f}", step, lr, loss);
    }
  }

  log_out.flush();
  if (!log_out) throw Error("loss log write failed");
  save_checkpoint(result.checkpoint_path, params, opts.train);
  return result;
}

}  // namespace solo
