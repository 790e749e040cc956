#include "coopmarl/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <map>
#include <sstream>
#include <variant>

#include "coopmarl/errors.hpp"

namespace coopmarl::harness {

namespace {

constexpr char kMagic[8] = {'C', 'O', 'O', 'P', 'M', 'A', 'R', 'L'};

enum Tag : std::uint8_t { kU64 = 1, kF64Array = 2, kU64Array = 3, kBytes = 4 };

using FieldValue =
    std::variant<std::uint64_t, std::vector<double>, std::vector<std::uint64_t>, std::string>;

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { little_endian(v, 2); }
  void u32(std::uint32_t v) { little_endian(v, 4); }
  void u64(std::uint64_t v) { little_endian(v, 8); }
  void raw(const std::string& s) { bytes_ += s; }

  void field(const std::string& name, const FieldValue& value) {
    ++fields_;
    u16(static_cast<std::uint16_t>(name.size()));
    raw(name);
    std::visit(
        [this](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, std::uint64_t>) {
            u8(kU64);
            u64(v);
          } else if constexpr (std::is_same_v<T, std::vector<double>>) {
            u8(kF64Array);
            u64(v.size());
            for (double d : v) u64(std::bit_cast<std::uint64_t>(d));
          } else if constexpr (std::is_same_v<T, std::vector<std::uint64_t>>) {
            u8(kU64Array);
            u64(v.size());
            for (std::uint64_t x : v) u64(x);
          } else {
            u8(kBytes);
            u64(v.size());
            raw(v);
          }
        },
        value);
  }

  std::string finish() const {
    Writer head;
    head.raw(std::string(kMagic, sizeof(kMagic)));
    head.u32(kCheckpointVersion);
    head.u32(fields_);
    return head.bytes_ + bytes_;
  }

 private:
  void little_endian(std::uint64_t v, int width) {
    for (int k = 0; k < width; ++k) bytes_.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
  }

  std::string bytes_;
  std::uint32_t fields_ = 0;
};

class Reader {
 public:
  Reader(std::string bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

  std::uint64_t uint(int width) {
    need(width);
    std::uint64_t v = 0;
    for (int k = 0; k < width; ++k)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + k])) << (8 * k);
    pos_ += width;
    return v;
  }
  std::string raw(std::uint64_t n) {
    need(n);
    std::string out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw CheckpointFormatError(source_ + ": " + what);
  }

 private:
  void need(std::uint64_t n) {
    if (n > bytes_.size() - pos_) fail("truncated checkpoint file");
  }

  std::string bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

class FieldMap {
 public:
  FieldMap(std::map<std::string, FieldValue> fields, std::string source)
      : fields_(std::move(fields)), source_(std::move(source)) {}

  template <typename T>
  const T& get(const std::string& name) const {
    auto it = fields_.find(name);
    if (it == fields_.end()) throw CheckpointFormatError(source_ + ": missing field '" + name + "'");
    const T* value = std::get_if<T>(&it->second);
    if (!value) throw CheckpointFormatError(source_ + ": field '" + name + "' has the wrong type");
    return *value;
  }

 private:
  std::map<std::string, FieldValue> fields_;
  std::string source_;
};

std::string rng_text(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

void put_params(Writer& w, const std::string& prefix, const nn::MlpParams& p) {
  w.field(prefix + ".layers", std::vector<std::uint64_t>(p.layer_sizes.begin(), p.layer_sizes.end()));
  w.field(prefix + ".params", p.flatten());
}

std::vector<double> flatten_moments(const nn::ParamGradients& g) {
  std::vector<double> flat;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    flat.insert(flat.end(), g.weights[l].data(), g.weights[l].data() + g.weights[l].size());
    flat.insert(flat.end(), g.biases[l].data(), g.biases[l].data() + g.biases[l].size());
  }
  return flat;
}

void put_adam(Writer& w, const std::string& prefix, const nn::AdamState& s) {
  w.field(prefix + ".m", flatten_moments(s.first_moment));
  w.field(prefix + ".v", flatten_moments(s.second_moment));
  w.field(prefix + ".t", static_cast<std::uint64_t>(s.timestep));
}

nn::MlpParams get_params(const FieldMap& f, const std::string& prefix, const std::string& source) {
  const auto& layers = f.get<std::vector<std::uint64_t>>(prefix + ".layers");
  nn::MlpParams p;
  try {
    p = nn::mlp_init(std::vector<int>(layers.begin(), layers.end()), 0);
    p.assign_flat(f.get<std::vector<double>>(prefix + ".params"));
  } catch (const ContractViolation& e) {
    throw CheckpointFormatError(source + ": bad network '" + prefix + "': " + e.what());
  }
  return p;
}

nn::ParamGradients get_moments(const FieldMap& f, const std::string& name, const nn::MlpParams& like,
                               const std::string& source) {
  nn::MlpParams shaped = like;
  try {
    shaped.assign_flat(f.get<std::vector<double>>(name));
  } catch (const ContractViolation& e) {
    throw CheckpointFormatError(source + ": bad optimizer field '" + name + "': " + e.what());
  }
  return {shaped.weights, shaped.biases};
}

nn::AdamState get_adam(const FieldMap& f, const std::string& prefix, const nn::MlpParams& like,
                       const std::string& source) {
  nn::AdamState s;
  s.first_moment = get_moments(f, prefix + ".m", like, source);
  s.second_moment = get_moments(f, prefix + ".v", like, source);
  s.timestep = static_cast<std::int64_t>(f.get<std::uint64_t>(prefix + ".t"));
  return s;
}

}  // namespace

void save_checkpoint(const maddpg::Trainer& trainer, const ExperimentConfig& config,
                     const std::filesystem::path& path) {
  Writer w;
  w.field("config", config_echo(config));
  w.field("seed", trainer.config().seed);
  w.field("episodes_completed", static_cast<std::uint64_t>(trainer.episodes_completed()));
  w.field("env_steps", trainer.env_steps());
  w.field("update_rounds", trainer.update_rounds());
  w.field("rng", rng_text(trainer.rng()));
  w.field("num_agents", static_cast<std::uint64_t>(trainer.learners().size()));
  for (std::size_t i = 0; i < trainer.learners().size(); ++i) {
    const auto& l = trainer.learners()[i];
    const std::string p = "agent." + std::to_string(i);
    w.field(p + ".team", static_cast<std::uint64_t>(l.team));
    put_params(w, p + ".actor", l.actor);
    put_params(w, p + ".critic", l.critic);
    put_params(w, p + ".target_actor", l.target_actor);
    put_params(w, p + ".target_critic", l.target_critic);
    put_adam(w, p + ".actor_opt", l.actor_opt);
    put_adam(w, p + ".critic_opt", l.critic_opt);
  }
  const auto& buffer = trainer.buffer();
  w.field("buffer.capacity", static_cast<std::uint64_t>(buffer.capacity()));
  w.field("buffer.cursor", static_cast<std::uint64_t>(buffer.cursor()));
  w.field("buffer.records", buffer.records());

  const std::string bytes = w.finish();
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string source = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointFormatError(source + ": cannot open checkpoint");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), source);

  if (r.raw(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) r.fail("not a checkpoint file (bad magic)");
  const auto version = static_cast<std::uint32_t>(r.uint(4));
  if (version != kCheckpointVersion)
    r.fail("unsupported checkpoint version " + std::to_string(version) + " (this build reads version " +
           std::to_string(kCheckpointVersion) + ")");
  const auto count = static_cast<std::uint32_t>(r.uint(4));
  std::map<std::string, FieldValue> fields;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string name = r.raw(r.uint(2));
    const auto tag = static_cast<std::uint8_t>(r.uint(1));
    switch (tag) {
      case kU64:
        fields[name] = r.uint(8);
        break;
      case kF64Array:
      case kU64Array: {
        const std::uint64_t n = r.uint(8);
        const std::string payload = r.raw(n > (1ull << 60) ? ~0ull : n * 8);
        std::vector<std::uint64_t> words(n);
        for (std::uint64_t e = 0; e < n; ++e) {
          std::uint64_t v = 0;
          for (int b = 0; b < 8; ++b)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(payload[e * 8 + b])) << (8 * b);
          words[e] = v;
        }
        if (tag == kU64Array) {
          fields[name] = std::move(words);
        } else {
          std::vector<double> values(n);
          for (std::uint64_t e = 0; e < n; ++e) values[e] = std::bit_cast<double>(words[e]);
          fields[name] = std::move(values);
        }
        break;
      }
      case kBytes:
        fields[name] = r.raw(r.uint(8));
        break;
      default:
        r.fail("unknown field type tag " + std::to_string(tag) + " for '" + name + "'");
    }
  }
  if (!r.at_end()) r.fail("trailing bytes after the last field");
  const FieldMap f(std::move(fields), source);

  ExperimentConfig config;
  try {
    config = experiment_from_json(nlohmann::json::parse(f.get<std::string>("config")));
  } catch (const std::exception& e) {
    throw CheckpointFormatError(source + ": embedded config is invalid: " + e.what());
  }
  const std::uint64_t seed = f.get<std::uint64_t>("seed");
  const auto num_agents = f.get<std::uint64_t>("num_agents");
  if (num_agents != static_cast<std::uint64_t>(config.world.num_agents()))
    r.fail("agent count does not match the embedded config");

  std::vector<maddpg::AgentLearner> learners;
  for (std::uint64_t i = 0; i < num_agents; ++i) {
    const std::string p = "agent." + std::to_string(i);
    maddpg::AgentLearner l;
    l.team = static_cast<env::Team>(f.get<std::uint64_t>(p + ".team"));
    l.actor = get_params(f, p + ".actor", source);
    l.critic = get_params(f, p + ".critic", source);
    l.target_actor = get_params(f, p + ".target_actor", source);
    l.target_critic = get_params(f, p + ".target_critic", source);
    l.actor_opt = get_adam(f, p + ".actor_opt", l.actor, source);
    l.critic_opt = get_adam(f, p + ".critic_opt", l.critic, source);
    learners.push_back(std::move(l));
  }

  std::mt19937_64 rng;
  std::istringstream rng_in(f.get<std::string>("rng"));
  rng_in >> rng;
  if (!rng_in) r.fail("corrupt RNG state");

  const auto layout = maddpg::LearnerLayout::from_world(config.world);
  try {
    auto buffer = maddpg::ReplayBuffer::restore(
        layout.transition_shape(), f.get<std::uint64_t>("buffer.capacity"),
        f.get<std::uint64_t>("buffer.cursor"), f.get<std::vector<double>>("buffer.records"));
    maddpg::TrainConfig train = config.train_for_seed(seed);
    train.buffer_capacity = buffer.capacity();
    auto trainer = maddpg::Trainer::restore(
        std::move(train), config.world, std::move(learners), std::move(buffer), rng,
        static_cast<int>(f.get<std::uint64_t>("episodes_completed")), f.get<std::uint64_t>("env_steps"),
        f.get<std::uint64_t>("update_rounds"));
    return {config, f.get<std::string>("config"), std::move(trainer)};
  } catch (const ContractViolation& e) {
    throw CheckpointFormatError(source + ": inconsistent training state: " + e.what());
  }
}

}  // namespace coopmarl::harness
