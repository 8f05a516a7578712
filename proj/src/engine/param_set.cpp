#include "sdr/engine/param_set.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sdr::ad {
namespace {

constexpr char kMagic[5] = {'S', 'D', 'R', 'K', '1'};

static_assert(std::endian::native == std::endian::little, "SDRK1 I/O assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    std::memcpy(&v, take(4, what), 4);
    return v;
  }
  const char* take(std::size_t n, const char* what) {
    if (pos_ + n > bytes_.size()) {
      throw DataError(std::string("SDRK1: truncated while reading ") + what + " at offset " + std::to_string(pos_));
    }
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_params(const ParamSet<float>& params) {
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, value] : params) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    put_u32(out, static_cast<std::uint32_t>(value.rank()));
    for (int d : value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    out.append(reinterpret_cast<const char*>(value.data()), value.size() * sizeof(float));
  }
  return out;
}

ParamSet<float> decode_params(const std::string& bytes) {
  Reader in(bytes);
  if (std::memcmp(in.take(sizeof(kMagic), "magic"), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("SDRK1: bad magic at offset 0");
  }
  const std::uint32_t count = in.u32("parameter count");
  ParamSet<float> params;
  for (std::uint32_t p = 0; p < count; ++p) {
    const std::uint32_t name_len = in.u32("name length");
    std::string name(in.take(name_len, "name"), name_len);
    const std::uint32_t rank = in.u32("rank");
    if (rank == 0 || rank > 8) {
      throw DataError("SDRK1: implausible rank " + std::to_string(rank) + " for '" + name + "' at offset " +
                      std::to_string(in.offset()));
    }
    Shape shape(rank);
    for (auto& d : shape) {
      const std::uint32_t v = in.u32("dims");
      if (v == 0 || v > (1u << 28)) throw DataError("SDRK1: bad dimension for '" + name + "'");
      d = static_cast<int>(v);
    }
    std::vector<float> data(shape_numel(shape));
    std::memcpy(data.data(), in.take(data.size() * sizeof(float), "values"), data.size() * sizeof(float));
    params.add(name, Tensor<float>(shape, std::move(data)));
  }
  if (!in.done()) throw DataError("SDRK1: trailing bytes at offset " + std::to_string(in.offset()));
  return params;
}

void save_params(const ParamSet<float>& params, const std::filesystem::path& path) {
  const std::string bytes = encode_params(params);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

ParamSet<float> load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open parameter file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_params(ss.str());
}

}  // namespace sdr::ad
