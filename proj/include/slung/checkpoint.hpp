#pragma once

// Portable checkpoint container. All integers are little-endian, all reals
// IEEE-754 binary64 little-endian.
//
//   offset  field
//   0       magic "SLUNGCKP" (8 bytes)
//   8       u32 version (= 1)
//   12      u32 num_agents, u32 obs_dim, u32 action_dim
//   24      u32 actor layer count, then (u32 out, u32 in) per layer
//           u32 critic layer count, then (u32 out, u32 in) per layer
//           f64 payload: for each actor layer weight (out x in, row-major)
//             then bias (out); log_std (action_dim); each critic layer alike
//           u64 update_index, u64 env_steps
//           u8 has_optimizer; if 1: i64 step, f64 beta1, beta2, epsilon,
//             f64 first moments then second moments, one per parameter in
//             payload order
//           u64 FNV-1a 64 hash of every preceding byte

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "slung/policy.hpp"
#include "slung/ppo.hpp"

namespace slung {

inline constexpr char kCheckpointMagic[8] = {'S', 'L', 'U', 'N', 'G', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  int num_agents = 1;
  PolicyParams params;
  std::optional<OptimizerState> optimizer;
  std::uint64_t update_index = 0;
  std::uint64_t env_steps = 0;
};

namespace detail {

inline std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t k = 0; k < n; ++k) {
    h ^= data[k];
    h *= 0x100000001b3ULL;
  }
  return h;
}

class ByteWriter {
 public:
  template <typename U>
  void put(U v) {
    static_assert(std::is_trivially_copyable_v<U>);
    std::uint8_t raw[sizeof(U)];
    std::memcpy(raw, &v, sizeof(U));
    if constexpr (std::endian::native == std::endian::big)
      std::reverse(raw, raw + sizeof(U));
    bytes_.insert(bytes_.end(), raw, raw + sizeof(U));
  }
  void put_raw(const char* s, std::size_t n) { bytes_.insert(bytes_.end(), s, s + n); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t n) : data_(data), n_(n) {}

  template <typename U>
  U get(const char* what) {
    if (pos_ + sizeof(U) > n_)
      throw CheckpointError(std::string("checkpoint truncated while reading ") + what +
                            " at byte " + std::to_string(pos_));
    std::uint8_t raw[sizeof(U)];
    std::memcpy(raw, data_ + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big)
      std::reverse(raw, raw + sizeof(U));
    pos_ += sizeof(U);
    U v;
    std::memcpy(&v, raw, sizeof(U));
    return v;
  }
  std::size_t position() const { return pos_; }

 private:
  const std::uint8_t* data_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

inline void write_shapes(ByteWriter& w, const Mlp<double>& net) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(l.weight.rows()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(l.weight.cols()));
  }
}

inline std::vector<int> read_shapes(ByteReader& r, int in_dim, int out_dim,
                                    const char* net) {
  const auto n = r.get<std::uint32_t>("layer count");
  if (n < 1 || n > 64)
    throw CheckpointError(std::string("checkpoint ") + net + " layer count " +
                          std::to_string(n) + " is invalid");
  std::vector<int> hidden;
  int prev = in_dim;
  for (std::uint32_t k = 0; k < n; ++k) {
    const auto rows = r.get<std::uint32_t>("layer rows");
    const auto cols = r.get<std::uint32_t>("layer cols");
    if (static_cast<int>(cols) != prev || rows < 1 || rows > 65536)
      throw CheckpointError(std::string("checkpoint ") + net + " layer " +
                            std::to_string(k) + " has inconsistent shape " +
                            std::to_string(rows) + "x" + std::to_string(cols));
    if (k + 1 < n) hidden.push_back(static_cast<int>(rows));
    else if (static_cast<int>(rows) != out_dim)
      throw CheckpointError(std::string("checkpoint ") + net + " output width " +
                            std::to_string(rows) + ", expected " +
                            std::to_string(out_dim));
    prev = static_cast<int>(rows);
  }
  return hidden;
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
  detail::ByteWriter w;
  w.put_raw(kCheckpointMagic, 8);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.num_agents));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.params.obs_dim()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.params.action_dim()));
  detail::write_shapes(w, c.params.actor);
  detail::write_shapes(w, c.params.critic);
  for_each_tensor(c.params, [&](const double* d, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) w.put<double>(d[k]);
  });
  w.put<std::uint64_t>(c.update_index);
  w.put<std::uint64_t>(c.env_steps);
  w.put<std::uint8_t>(c.optimizer ? 1 : 0);
  if (c.optimizer) {
    const OptimizerState& o = *c.optimizer;
    if (o.first_moment.size() != c.params.parameter_count() ||
        o.second_moment.size() != c.params.parameter_count())
      throw std::invalid_argument("checkpoint: optimizer state size mismatch");
    w.put<std::int64_t>(o.step);
    w.put<double>(o.beta1);
    w.put<double>(o.beta2);
    w.put<double>(o.epsilon);
    for (double v : o.first_moment) w.put<double>(v);
    for (double v : o.second_moment) w.put<double>(v);
  }
  const std::uint64_t h = detail::fnv1a(w.bytes().data(), w.bytes().size());
  w.put<std::uint64_t>(h);
  return std::move(w.bytes());
}

// expected_agents < 0 skips the agent-count check.
inline Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes,
                                         int expected_agents = -1) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw CheckpointError("not a checkpoint file (bad magic)");
  detail::ByteReader r(bytes.data() + 8, bytes.size() - 8);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint version " + std::to_string(version) +
                          ", expected " + std::to_string(kCheckpointVersion));
  Checkpoint c;
  c.num_agents = static_cast<int>(r.get<std::uint32_t>("num_agents"));
  const int obs_dim = static_cast<int>(r.get<std::uint32_t>("obs_dim"));
  const int action_dim = static_cast<int>(r.get<std::uint32_t>("action_dim"));
  if (expected_agents >= 0 && c.num_agents != expected_agents)
    throw CheckpointError("checkpoint trained for " + std::to_string(c.num_agents) +
                          " agents (obs_dim " + std::to_string(obs_dim) +
                          "), environment has " + std::to_string(expected_agents) +
                          " agents (obs_dim " +
                          std::to_string(28 + 3 * (expected_agents - 1)) + ")");
  if (c.num_agents < 1 || obs_dim != 28 + 3 * (c.num_agents - 1))
    throw CheckpointError("checkpoint obs_dim " + std::to_string(obs_dim) +
                          " inconsistent with " + std::to_string(c.num_agents) +
                          " agents");
  if (action_dim != 4)
    throw CheckpointError("checkpoint action_dim " + std::to_string(action_dim) +
                          ", expected 4");

  PolicyShape shape;
  shape.obs_dim = obs_dim;
  shape.action_dim = action_dim;
  shape.actor_hidden = detail::read_shapes(r, obs_dim, action_dim, "actor");
  shape.critic_hidden = detail::read_shapes(r, obs_dim, 1, "critic");
  c.params = make_zero_policy(shape);
  for_each_tensor(c.params, [&](double* d, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) d[k] = r.get<double>("parameters");
  });
  c.update_index = r.get<std::uint64_t>("update_index");
  c.env_steps = r.get<std::uint64_t>("env_steps");
  const auto has_opt = r.get<std::uint8_t>("optimizer flag");
  if (has_opt > 1) throw CheckpointError("checkpoint optimizer flag corrupted");
  if (has_opt) {
    OptimizerState o(c.params.parameter_count());
    o.step = r.get<std::int64_t>("optimizer step");
    o.beta1 = r.get<double>("beta1");
    o.beta2 = r.get<double>("beta2");
    o.epsilon = r.get<double>("epsilon");
    for (double& v : o.first_moment) v = r.get<double>("first moments");
    for (double& v : o.second_moment) v = r.get<double>("second moments");
    c.optimizer = std::move(o);
  }
  const std::size_t body = 8 + r.position();
  const std::uint64_t stored = r.get<std::uint64_t>("checksum");
  const std::uint64_t actual = detail::fnv1a(bytes.data(), body);
  if (stored != actual)
    throw CheckpointError("checkpoint corrupted: checksum mismatch");
  if (8 + r.position() != bytes.size())
    throw CheckpointError("checkpoint corrupted: " +
                          std::to_string(bytes.size() - 8 - r.position()) +
                          " trailing bytes");
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  const std::vector<std::uint8_t> bytes = serialize_checkpoint(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path, int expected_agents = -1) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes, expected_agents);
}

inline void save_policy(const PolicyParams& p, int num_agents, const std::string& path) {
  Checkpoint c;
  c.num_agents = num_agents;
  c.params = p;
  save_checkpoint(c, path);
}

inline PolicyParams load_policy(const std::string& path, int expected_agents = -1) {
  return load_checkpoint(path, expected_agents).params;
}

}  // namespace slung
