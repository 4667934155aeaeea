#include "splab/serialize.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "splab/error.hpp"

namespace splab {

namespace {

std::array<uint32_t, 256> make_crc_table() {
  std::array<uint32_t, 256> table{};
  for (uint32_t i = 0; i < 256; ++i) {
    uint32_t c = i;
    for (int b = 0; b < 8; ++b) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    table[i] = c;
  }
  return table;
}

const std::array<uint32_t, 256>& crc_table() {
  static const auto table = make_crc_table();
  return table;
}

class ByteWriter {
 public:
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void bytes(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void str(const std::string& s) { bytes(s.data(), s.size()); }
  const std::vector<uint8_t>& data() const { return buf_; }

 private:
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(std::vector<uint8_t> buf, std::string what)
      : buf_(std::move(buf)), what_(std::move(what)) {}

  size_t pos() const { return pos_; }
  size_t remaining() const { return buf_.size() - pos_; }
  bool at_end() const { return pos_ == buf_.size(); }

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void floats(float* dst, size_t count) {
    need(count * 4);
    std::memcpy(dst, buf_.data() + pos_, count * 4);
    pos_ += count * 4;
  }
  void ints(int32_t* dst, size_t count) {
    need(count * 4);
    std::memcpy(dst, buf_.data() + pos_, count * 4);
    pos_ += count * 4;
  }
  const uint8_t* raw() const { return buf_.data(); }

 private:
  void need(size_t n) {
    if (pos_ + n > buf_.size())
      throw FormatError(what_ + ": truncated file (needed " + std::to_string(n) +
                        " bytes at offset " + std::to_string(pos_) + ")");
  }
  std::vector<uint8_t> buf_;
  std::string what_;
  size_t pos_ = 0;
};

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  in.seekg(0);
  std::vector<uint8_t> buf(static_cast<size_t>(size));
  in.read(reinterpret_cast<char*>(buf.data()), size);
  if (!in) throw FormatError("short read on " + path.string());
  return buf;
}

void write_file(const std::filesystem::path& path, const std::vector<uint8_t>& buf) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError("short write on " + path.string());
}

}  // namespace

uint32_t crc32(const uint8_t* data, size_t n, uint32_t crc) {
  const auto& table = crc_table();
  crc = ~crc;
  for (size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return ~crc;
}

uint32_t crc32_file(const std::filesystem::path& path) {
  const auto buf = read_file(path);
  return crc32(buf.data(), buf.size());
}

std::string crc32_hex(uint32_t crc) {
  char out[9];
  std::snprintf(out, sizeof(out), "%08x", crc);
  return out;
}

void write_container(const std::filesystem::path& path, const std::string& magic,
                     const json& meta, const std::vector<NamedTensor>& tensors) {
  if (magic.size() != 4) throw FormatError("container magic must be 4 bytes");
  ByteWriter w;
  w.str(magic);
  w.u32(kContainerVersion);
  const std::string meta_str = meta.dump();
  w.u32(static_cast<uint32_t>(meta_str.size()));
  w.str(meta_str);
  for (const auto& nt : tensors) {
    w.u32(static_cast<uint32_t>(nt.name.size()));
    w.str(nt.name);
    w.u32(static_cast<uint32_t>(nt.tensor.rank()));
    for (int i = 0; i < nt.tensor.rank(); ++i)
      w.u32(static_cast<uint32_t>(nt.tensor.shape().dim(i)));
    w.bytes(nt.tensor.data(), nt.tensor.size() * 4);
  }
  write_file(path, w.data());
}

bool Container::has(const std::string& name) const {
  for (const auto& nt : tensors)
    if (nt.name == name) return true;
  return false;
}

const Tensor& Container::get(const std::string& name) const {
  for (const auto& nt : tensors)
    if (nt.name == name) return nt.tensor;
  throw FormatError("container: missing tensor '" + name + "'");
}

Container read_container(const std::filesystem::path& path, const std::string& expected_magic) {
  ByteReader r(read_file(path), path.string());
  const std::string magic = r.str(4);
  if (magic != expected_magic)
    throw FormatError(path.string() + ": bad magic '" + magic + "' (expected '" +
                      expected_magic + "')");
  Container c;
  c.version = r.u32();
  if (c.version != kContainerVersion)
    throw FormatError(path.string() + ": unsupported format version " + std::to_string(c.version));
  const uint32_t meta_len = r.u32();
  const std::string meta_str = r.str(meta_len);
  try {
    c.meta = json::parse(meta_str);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": bad metadata json: " + e.what());
  }
  while (!r.at_end()) {
    const uint32_t name_len = r.u32();
    NamedTensor nt;
    nt.name = r.str(name_len);
    const uint32_t rank = r.u32();
    if (rank < 1 || rank > 3)
      throw FormatError(path.string() + ": tensor '" + nt.name + "' has bad rank " +
                        std::to_string(rank));
    std::vector<int> dims(rank);
    for (uint32_t i = 0; i < rank; ++i) {
      const uint32_t d = r.u32();
      if (d == 0 || d > (1u << 28))
        throw FormatError(path.string() + ": tensor '" + nt.name + "' has bad dim");
      dims[i] = static_cast<int>(d);
    }
    Shape shape = rank == 1   ? Shape{dims[0]}
                  : rank == 2 ? Shape{dims[0], dims[1]}
                              : Shape{dims[0], dims[1], dims[2]};
    Tensor t(shape);
    r.floats(t.data(), t.size());
    nt.tensor = std::move(t);
    c.tensors.push_back(std::move(nt));
  }
  return c;
}

}  // namespace splab
