#include "isd/checkpoint.hpp"

#include "isd/binary_io.hpp"
#include "isd/config.hpp"
#include "isd/errors.hpp"

namespace isd {

namespace {

constexpr std::string_view kMagic = "ISDCKPT1";
constexpr std::uint32_t kVersion = 1;

void put_mlp(ByteWriter& out, const Mlp& mlp) {
  out.put<std::uint64_t>(mlp.spec.layer_widths.size());
  for (auto w : mlp.spec.layer_widths) out.put<std::uint64_t>(w);
  out.put<std::uint8_t>(mlp.spec.final_normalize ? 1 : 0);
  for (std::size_t i = 0; i < mlp.weights.size(); ++i) {
    out.put_array<double>(mlp.weights[i].values());
    out.put_array<double>(mlp.biases[i].values());
  }
}

Mlp get_mlp(ByteReader& in, bool trainable) {
  Mlp mlp;
  const auto layers = in.get<std::uint64_t>();
  if (layers > 64) throw CheckpointError("implausible layer count in checkpoint");
  for (std::uint64_t i = 0; i < layers; ++i) mlp.spec.layer_widths.push_back(in.get<std::uint64_t>());
  mlp.spec.final_normalize = in.get<std::uint8_t>() != 0;
  if (layers == 0) return mlp;
  mlp.spec.validate();
  for (std::size_t i = 0; i + 1 < layers; ++i) {
    const auto fan_in = mlp.spec.layer_widths[i], fan_out = mlp.spec.layer_widths[i + 1];
    mlp.weights.push_back(Tensor::from({fan_in, fan_out}, in.get_array<double>(fan_in * fan_out), trainable));
    mlp.biases.push_back(Tensor::from({fan_out}, in.get_array<double>(fan_out), trainable));
  }
  return mlp;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const TrainState& state) {
  ByteWriter out;
  out.put_raw(kMagic);
  out.put<std::uint32_t>(kVersion);
  out.put_string(serialize_train_config(state.config));
  out.put<std::uint64_t>(state.input_dim);
  put_mlp(out, state.model.student_encoder);
  put_mlp(out, state.model.student_predictor);
  put_mlp(out, state.model.teacher_encoder);

  out.put<double>(state.sgd.lr);
  out.put<double>(state.sgd.momentum);
  out.put<double>(state.sgd.weight_decay);
  out.put<std::uint64_t>(state.sgd.velocity.size());
  for (const auto& v : state.sgd.velocity) {
    out.put<std::uint64_t>(v.size());
    out.put_array<double>(v);
  }

  out.put<std::uint64_t>(state.epoch);
  out.put<std::uint64_t>(state.step);
  out.put_string(rng_state(state.order_rng));
  out.put_string(rng_state(state.aug_rng));

  const auto& bank = state.bank;
  out.put<std::uint64_t>(bank.capacity());
  out.put<std::uint64_t>(bank.dim());
  out.put<std::uint64_t>(bank.head());
  out.put<std::uint64_t>(bank.count());
  out.put<std::uint64_t>(bank.total_enqueued());
  out.put_array<double>(bank.storage());
  return out.bytes();
}

TrainState decode_checkpoint(std::span<const std::uint8_t> bytes) {
  try {
    ByteReader in(bytes);
    if (bytes.size() < kMagic.size() || in.get_raw(kMagic.size()) != kMagic) {
      throw CheckpointError("not a checkpoint file");
    }
    if (in.get<std::uint32_t>() != kVersion) throw CheckpointError("unsupported checkpoint version");
    auto config = parse_train_config(in.get_string());
    const auto input_dim = in.get<std::uint64_t>();

    ModelPair model;
    model.student_encoder = get_mlp(in, true);
    model.student_predictor = get_mlp(in, true);
    model.teacher_encoder = get_mlp(in, false);
    model.momentum = config.momentum;
    if (!(model.student_encoder.spec == config.encoder_spec(input_dim)) ||
        !(model.teacher_encoder.spec == model.student_encoder.spec) ||
        !(model.student_predictor.spec == config.predictor_spec())) {
      throw CheckpointError("checkpoint architecture disagrees with its own config");
    }

    SgdState sgd;
    sgd.lr = in.get<double>();
    sgd.momentum = in.get<double>();
    sgd.weight_decay = in.get<double>();
    const auto buffers = in.get<std::uint64_t>();
    const auto params = model.student_parameters();
    if (buffers != params.size()) throw CheckpointError("velocity buffer count does not match the parameters");
    for (std::uint64_t i = 0; i < buffers; ++i) {
      const auto n = in.get<std::uint64_t>();
      if (n != params[i].size()) throw CheckpointError("velocity buffer shape does not match its parameter");
      sgd.velocity.push_back(in.get_array<double>(n));
    }

    const auto epoch = in.get<std::uint64_t>();
    const auto step = in.get<std::uint64_t>();
    Rng order_rng, aug_rng;
    restore_rng_state(order_rng, in.get_string());
    restore_rng_state(aug_rng, in.get_string());

    const auto capacity = in.get<std::uint64_t>();
    const auto dim = in.get<std::uint64_t>();
    const auto head = in.get<std::uint64_t>();
    const auto count = in.get<std::uint64_t>();
    const auto total = in.get<std::uint64_t>();
    if (capacity == 0 || dim != config.embedding_dim || capacity > bytes.size()) {
      throw CheckpointError("bank header disagrees with the config");
    }
    auto storage = in.get_array<double>(capacity * dim);
    auto bank = AnchorBank::restore(capacity, dim, head, count, total, std::move(storage));
    if (in.remaining() != 0) throw CheckpointError("trailing bytes after checkpoint payload");

    return TrainState{std::move(config), input_dim, std::move(model), std::move(sgd), std::move(bank),
                      std::move(order_rng), std::move(aug_rng), epoch, step};
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
  }
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  try {
    write_file(path, encode_checkpoint(state));
  } catch (const DataError& e) {
    throw CheckpointError(e.what());
  }
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const DataError& e) {
    throw CheckpointError(e.what());
  }
  return decode_checkpoint(bytes);
}

}  // namespace isd
