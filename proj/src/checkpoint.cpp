#include "spcl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace spcl {

const CheckpointEntry* Checkpoint::find(std::string_view name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

const CheckpointEntry& Checkpoint::at(std::string_view name) const {
  const auto* e = find(name);
  if (e == nullptr) fail(ErrorCode::kSchema, "checkpoint: missing entry " + std::string(name));
  return *e;
}

void Checkpoint::put(std::string name, std::uint64_t rows, std::uint64_t cols,
                     std::vector<double> data) {
  if (data.size() != rows * cols) fail(ErrorCode::kDimension, "checkpoint entry " + name + ": size");
  if (find(name)) fail(ErrorCode::kArgument, "checkpoint: duplicate entry " + name);
  entries.push_back(CheckpointEntry{std::move(name), rows, cols, std::move(data)});
}

std::string Checkpoint::meta(const std::string& key) const {
  auto it = metadata.find(key);
  if (it == metadata.end()) fail(ErrorCode::kSchema, "checkpoint: missing metadata " + key);
  return it->second;
}

namespace {

constexpr char kMagic[5] = {'S', 'P', 'C', 'L', '1'};

class Writer {
 public:
  void u32(std::uint32_t v) { put_le(v, 4); }
  void u64(std::uint64_t v) { put_le(v, 8); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v), 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void raw(const char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void put_le(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t u64() { return get_le(8); }
  double f64() { return std::bit_cast<double>(get_le(8)); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void expect_magic() {
    need(sizeof(kMagic));
    if (std::memcmp(in_.data(), kMagic, sizeof(kMagic)) != 0) {
      fail(ErrorCode::kParse, "checkpoint: bad magic (expected SPCL1)");
    }
    pos_ += sizeof(kMagic);
  }
  bool done() const { return pos_ == in_.size(); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) fail(ErrorCode::kParse, "checkpoint: truncated");
  }
  std::uint64_t get_le(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const auto& e : ckpt.entries) {
    w.str(e.name);
    w.u64(e.rows);
    w.u64(e.cols);
    for (double v : e.data) w.f64(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect_magic();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    fail(ErrorCode::kParse, "checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const std::uint32_t metas = r.u32();
  for (std::uint32_t i = 0; i < metas; ++i) {
    std::string k = r.str();
    ckpt.metadata[k] = r.str();
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = r.str();
    e.rows = r.u64();
    e.cols = r.u64();
    if (e.cols != 0 && e.rows > r.remaining() / 8 / e.cols) {
      fail(ErrorCode::kParse, "checkpoint: entry " + e.name + " larger than file");
    }
    e.data.resize(e.rows * e.cols);
    for (double& v : e.data) v = r.f64();
    ckpt.entries.push_back(std::move(e));
  }
  if (!r.done()) fail(ErrorCode::kParse, "checkpoint: trailing bytes");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "write failed: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void store_model(Checkpoint& ckpt, const Model& model) {
  ckpt.metadata["model.width"] = std::to_string(model.spec().width);
  ckpt.metadata["model.expansion"] = std::to_string(model.spec().expansion);
  ckpt.metadata["model.block_count"] = std::to_string(model.spec().block_count);
  ckpt.metadata["model.input_dim"] = std::to_string(model.input_dim());
  ckpt.metadata["model.num_classes"] = std::to_string(model.num_classes());
  for (std::size_t i = 0; i < model.registry().size(); ++i) {
    const auto& e = model.registry().at(i);
    auto v = model.values(i);
    ckpt.put("model/" + e.name, e.rows, e.cols, std::vector<double>(v.begin(), v.end()));
  }
}

Model load_model(const Checkpoint& ckpt) {
  auto num = [&](const std::string& key) -> std::size_t {
    try {
      return static_cast<std::size_t>(std::stoull(ckpt.meta(key)));
    } catch (const std::logic_error&) {
      fail(ErrorCode::kSchema, "checkpoint: metadata " + key + " is not an integer");
    }
  };
  BlockSpec spec{num("model.width"), num("model.expansion"), num("model.block_count")};
  Model model(spec, num("model.input_dim"), num("model.num_classes"));
  for (std::size_t i = 0; i < model.registry().size(); ++i) {
    const auto& e = model.registry().at(i);
    const auto& stored = ckpt.at("model/" + e.name);
    if (stored.rows != e.rows || stored.cols != e.cols) {
      fail(ErrorCode::kSchema, "checkpoint: entry model/" + e.name + " has wrong shape");
    }
    auto dst = model.mutable_values(i);
    std::copy(stored.data.begin(), stored.data.end(), dst.begin());
  }
  return model;
}

void store_mas(Checkpoint& ckpt, const MasState& mas) {
  ckpt.put("mas/omega", 1, mas.omega.size(), mas.omega);
  ckpt.put("mas/anchor", 1, mas.anchor.size(), mas.anchor);
  ckpt.put("mas/alpha_lambda", 1, 2, {mas.alpha, mas.lambda});
}

MasState load_mas(const Checkpoint& ckpt) {
  MasState mas;
  mas.omega = ckpt.at("mas/omega").data;
  mas.anchor = ckpt.at("mas/anchor").data;
  const auto& al = ckpt.at("mas/alpha_lambda").data;
  if (al.size() != 2) fail(ErrorCode::kSchema, "checkpoint: mas/alpha_lambda");
  mas.alpha = al[0];
  mas.lambda = al[1];
  return mas;
}

void store_buffer(Checkpoint& ckpt, const ReplayBuffer& buffer) {
  const std::size_t n = buffer.size();
  const std::size_t dim = n ? buffer.items().front().features.size() : 0;
  std::vector<double> features;
  std::vector<double> labels;
  std::vector<double> tasks;
  for (const auto& item : buffer.items()) {
    features.insert(features.end(), item.features.begin(), item.features.end());
    labels.push_back(static_cast<double>(item.label));
    tasks.push_back(static_cast<double>(item.task));
  }
  ckpt.metadata["buffer.capacity"] = std::to_string(buffer.capacity());
  ckpt.metadata["buffer.seen_count"] = std::to_string(buffer.seen_count());
  ckpt.put("buffer/features", n, dim, std::move(features));
  ckpt.put("buffer/labels", 1, n, std::move(labels));
  ckpt.put("buffer/tasks", 1, n, std::move(tasks));
}

ReplayBuffer load_buffer(const Checkpoint& ckpt) {
  const auto& f = ckpt.at("buffer/features");
  const auto& l = ckpt.at("buffer/labels");
  const auto& t = ckpt.at("buffer/tasks");
  std::vector<ReplayItem> items;
  for (std::size_t i = 0; i < f.rows; ++i) {
    items.push_back(ReplayItem{
        std::vector<double>(f.data.begin() + static_cast<std::ptrdiff_t>(i * f.cols),
                            f.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * f.cols)),
        static_cast<std::size_t>(l.data.at(i)), static_cast<std::size_t>(t.data.at(i))});
  }
  return ReplayBuffer::restore(std::stoull(ckpt.meta("buffer.capacity")), std::move(items),
                               std::stoull(ckpt.meta("buffer.seen_count")));
}

void store_mask(Checkpoint& ckpt, const std::string& name, const SelectionMask& mask) {
  std::vector<double> bits(mask.bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = mask.bits.test(i) ? 1.0 : 0.0;
  const std::size_t n = bits.size();
  ckpt.put(name, 1, n, std::move(bits));
  ckpt.metadata[name + ".rate"] = std::to_string(mask.rate);
  ckpt.metadata[name + ".strategy"] = strategy_name(mask.strategy);
}

void store_scores(Checkpoint& ckpt, const std::string& name, const ImportanceMap& scores,
                  std::size_t param_count) {
  std::vector<double> full(param_count, 0.0);
  for (std::size_t k = 0; k < scores.indices.size(); ++k) full[scores.indices[k]] = scores.scores[k];
  ckpt.put(name, 1, param_count, std::move(full));
}

}  // namespace spcl
