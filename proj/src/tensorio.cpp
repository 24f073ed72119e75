#include "curvseg/tensorio.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "curvseg/errors.hpp"

namespace curvseg {

std::size_t TensorEntry::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void TensorContainer::add(TensorEntry entry) {
  if (entry.name.empty() || entry.name.size() > 0xFFFF) {
    throw std::invalid_argument("TensorContainer: name length must be 1..65535 bytes");
  }
  if (entry.dims.size() > 0xFF) throw std::invalid_argument("TensorContainer: too many dims");
  if (entry.element_count() != entry.data.size()) {
    throw std::invalid_argument("TensorContainer: '" + entry.name +
                                "' payload does not match its dims");
  }
  if (find(entry.name) != nullptr) {
    throw std::invalid_argument("TensorContainer: duplicate entry '" + entry.name + "'");
  }
  entries_.push_back(std::move(entry));
}

void TensorContainer::add(std::string name, std::vector<std::uint32_t> dims, std::vector<float> data) {
  add(TensorEntry{std::move(name), std::move(dims), std::move(data)});
}

const TensorEntry* TensorContainer::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

const TensorEntry& TensorContainer::at(const std::string& name) const {
  const TensorEntry* e = find(name);
  if (e == nullptr) throw ParseError("TensorContainer: missing entry '" + name + "'");
  return *e;
}

namespace {

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u16(std::string& out, std::uint16_t v) {
  put_u8(out, static_cast<std::uint8_t>(v & 0xFF));
  put_u8(out, static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) put_u8(out, static_cast<std::uint8_t>((v >> s) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint16_t u16() {
    const std::uint16_t lo = u8();
    const std::uint16_t hi = u8();
    return static_cast<std::uint16_t>(lo | (hi << 8));
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int s = 0; s < 32; s += 8) v |= static_cast<std::uint32_t>(u8()) << s;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ParseError("TensorContainer: truncated data");
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string TensorContainer::serialize() const {
  std::string out = "SEGT";
  put_u8(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    put_u16(out, static_cast<std::uint16_t>(e.name.size()));
    out += e.name;
    put_u8(out, static_cast<std::uint8_t>(e.dims.size()));
    for (auto d : e.dims) put_u32(out, d);
    for (float f : e.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

TensorContainer TensorContainer::deserialize(const std::string& bytes) {
  Reader in(bytes);
  if (in.str(4) != "SEGT") throw ParseError("TensorContainer: bad magic");
  const std::uint8_t version = in.u8();
  if (version != kVersion) {
    throw ParseError("TensorContainer: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = in.u32();
  TensorContainer tc;
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorEntry e;
    e.name = in.str(in.u16());
    const std::uint8_t ndim = in.u8();
    for (std::uint8_t d = 0; d < ndim; ++d) e.dims.push_back(in.u32());
    const std::size_t n = e.element_count();
    in.need(n * 4);
    e.data.resize(n);
    for (auto& f : e.data) f = std::bit_cast<float>(in.u32());
    try {
      tc.add(std::move(e));
    } catch (const std::invalid_argument& err) {
      throw ParseError(err.what());
    }
  }
  if (!in.done()) throw ParseError("TensorContainer: trailing bytes after last entry");
  return tc;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void TensorContainer::write_file(const std::filesystem::path& path) const {
  write_file_atomic(path, serialize());
}

TensorContainer TensorContainer::read_file(const std::filesystem::path& path) {
  return deserialize(read_file_bytes(path));
}

// ---------------------------------------------------------------------------
// Netpbm

namespace {

struct NetpbmHeader {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t payload = 0;  // offset of the first pixel byte
};

NetpbmHeader parse_netpbm(const std::string& bytes, const char* magic) {
  if (bytes.size() < 2 || bytes.compare(0, 2, magic) != 0) {
    throw ParseError(std::string("netpbm: expected magic ") + magic);
  }
  std::size_t pos = 2;
  const auto next_number = [&]() -> std::size_t {
    while (pos < bytes.size()) {
      const char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t v = 0;
    std::size_t digits = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      ++pos;
      ++digits;
    }
    if (digits == 0) throw ParseError("netpbm: malformed header");
    return v;
  };
  NetpbmHeader h;
  h.width = next_number();
  h.height = next_number();
  const std::size_t maxval = next_number();
  if (maxval != 255) throw ParseError("netpbm: only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw ParseError("netpbm: malformed header");
  }
  h.payload = pos + 1;
  if (h.width == 0 || h.height == 0) throw ParseError("netpbm: empty image");
  return h;
}

std::string netpbm_header(const char* magic, std::size_t w, std::size_t h) {
  return std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
}

}  // namespace

std::string encode_pgm(const ImageGrid& image) {
  std::string out = netpbm_header("P5", image.width(), image.height());
  for (double v : image.values()) {
    const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
    out.push_back(static_cast<char>(static_cast<std::uint8_t>(q)));
  }
  return out;
}

ImageGrid decode_pgm(const std::string& bytes) {
  const NetpbmHeader h = parse_netpbm(bytes, "P5");
  if (bytes.size() - h.payload != h.width * h.height) throw ParseError("pgm: payload size mismatch");
  ImageGrid out(h.height, h.width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<double>(static_cast<std::uint8_t>(bytes[h.payload + i])) / 255.0;
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const ImageGrid& image) {
  write_file_atomic(path, encode_pgm(image));
}

ImageGrid read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file_bytes(path)); }

std::string encode_ppm(const RgbImage& image) {
  if (image.rgb.size() != image.height * image.width * 3) {
    throw std::invalid_argument("encode_ppm: pixel buffer does not match dimensions");
  }
  std::string out = netpbm_header("P6", image.width, image.height);
  out.append(reinterpret_cast<const char*>(image.rgb.data()), image.rgb.size());
  return out;
}

RgbImage decode_ppm(const std::string& bytes) {
  const NetpbmHeader h = parse_netpbm(bytes, "P6");
  if (bytes.size() - h.payload != h.width * h.height * 3) throw ParseError("ppm: payload size mismatch");
  RgbImage out{h.height, h.width, {}};
  out.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.payload), bytes.end());
  return out;
}

TensorContainer instances_to_container(const InstanceSet& set) {
  set.validate();
  std::vector<float> data;
  data.reserve(set.size() * set.height * set.width);
  for (const auto& m : set.masks) {
    for (auto v : m.values()) data.push_back(v ? 1.0f : 0.0f);
  }
  TensorContainer tc;
  tc.add("masks",
         {static_cast<std::uint32_t>(set.size()), static_cast<std::uint32_t>(set.height),
          static_cast<std::uint32_t>(set.width)},
         std::move(data));
  return tc;
}

InstanceSet instances_from_container(const TensorContainer& tc) {
  const TensorEntry& e = tc.at("masks");
  if (e.dims.size() != 3 || e.dims[1] == 0 || e.dims[2] == 0) {
    throw ParseError("instances: 'masks' must have dims [n, H, W] with H, W >= 1");
  }
  InstanceSet set(e.dims[1], e.dims[2]);
  const std::size_t plane = set.height * set.width;
  for (std::size_t k = 0; k < e.dims[0]; ++k) {
    Mask m(set.height, set.width, 0);
    for (std::size_t i = 0; i < plane; ++i) m[i] = e.data[k * plane + i] != 0.0f ? 1 : 0;
    set.masks.push_back(std::move(m));
  }
  return set;
}

}  // namespace curvseg
