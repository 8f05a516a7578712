#include "sdr/io/files.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <tuple>
#include <vector>

namespace sdr::io {
namespace {

static_assert(std::endian::native == std::endian::little, "PFM writer assumes a little-endian host");

// Reads one whitespace-delimited header token starting at pos.
std::string next_token(const std::string& bytes, std::size_t& pos, const std::string& origin) {
  while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  if (start == pos) throw DataError(origin + ": truncated PFM header at byte " + std::to_string(start));
  return bytes.substr(start, pos - start);
}

int parse_dim(const std::string& tok, std::size_t offset, const std::string& origin) {
  int v = 0;
  const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size() || v <= 0) {
    throw DataError(origin + ": bad PFM dimension '" + tok + "' near byte " + std::to_string(offset));
  }
  return v;
}

void put_u32be(std::string& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

void put_chunk(std::string& out, const char* type, const std::string& data) {
  put_u32be(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  put_u32be(out, static_cast<std::uint32_t>(crc32(0, reinterpret_cast<const Bytef*>(body.data()),
                                                  static_cast<uInt>(body.size()))));
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open " + tmp.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f.flush()) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw DataError("write failed for " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::string encode_pfm(const Tensor<float>& t) {
  const bool color = t.rank() == 3;
  if (!(t.rank() == 2 || (color && t.dim(0) == 3))) {
    throw ConfigError("PFM holds H×W or 3×H×W tensors, got " + shape_str(t.shape()));
  }
  const int H = t.height(), W = t.width(), C = color ? 3 : 1;
  std::string out = std::string(color ? "PF" : "Pf") + "\n" + std::to_string(W) + " " + std::to_string(H) + "\n-1.0\n";
  const std::size_t header = out.size();
  out.resize(header + static_cast<std::size_t>(H) * W * C * sizeof(float));
  char* dst = out.data() + header;
  for (int i = H - 1; i >= 0; --i) {
    for (int j = 0; j < W; ++j) {
      for (int c = 0; c < C; ++c) {
        const float v = color ? t.at(c, i, j) : t.at(i, j);
        std::memcpy(dst, &v, sizeof v);
        dst += sizeof v;
      }
    }
  }
  return out;
}

Tensor<float> decode_pfm(const std::string& bytes, const std::string& origin) {
  std::size_t pos = 0;
  const std::string magic = next_token(bytes, pos, origin);
  if (magic != "Pf" && magic != "PF") throw DataError(origin + ": bad PFM magic '" + magic + "' at byte 0");
  const bool color = magic == "PF";
  std::size_t at = pos;
  const int W = parse_dim(next_token(bytes, pos, origin), at, origin);
  at = pos;
  const int H = parse_dim(next_token(bytes, pos, origin), at, origin);
  at = pos;
  const std::string scale_tok = next_token(bytes, pos, origin);
  double scale = 0;
  {
    std::istringstream ss(scale_tok);
    if (!(ss >> scale) || scale == 0) throw DataError(origin + ": bad PFM scale '" + scale_tok + "' near byte " + std::to_string(at));
  }
  if (scale > 0) throw DataError(origin + ": big-endian PFM (positive scale) is not supported");
  // Exactly one whitespace byte separates the header from the raster.
  if (pos >= bytes.size()) throw DataError(origin + ": PFM header not terminated");
  ++pos;
  const int C = color ? 3 : 1;
  const std::size_t need = static_cast<std::size_t>(H) * W * C * sizeof(float);
  if (bytes.size() - pos != need) {
    throw DataError(origin + ": PFM raster has " + std::to_string(bytes.size() - pos) + " bytes after offset " +
                    std::to_string(pos) + ", expected " + std::to_string(need));
  }
  Tensor<float> t(color ? Shape{3, H, W} : Shape{H, W});
  const char* src = bytes.data() + pos;
  for (int i = H - 1; i >= 0; --i) {
    for (int j = 0; j < W; ++j) {
      for (int c = 0; c < C; ++c) {
        float v;
        std::memcpy(&v, src, sizeof v);
        src += sizeof v;
        (color ? t.at(c, i, j) : t.at(i, j)) = v;
      }
    }
  }
  return t;
}

void write_pfm(const std::filesystem::path& path, const Tensor<float>& t) { write_file_atomic(path, encode_pfm(t)); }

Tensor<float> read_pfm(const std::filesystem::path& path) { return decode_pfm(read_file(path), path.string()); }

std::string encode_sparse_csv(const Tensor<float>& sparse) {
  if (sparse.rank() != 2) throw ConfigError("sparse CSV holds H×W maps, got " + shape_str(sparse.shape()));
  std::string out = "row,col,depth_m\n";
  char buf[64];
  // Row-major traversal is already (row, col) order.
  for (int i = 0; i < sparse.height(); ++i) {
    for (int j = 0; j < sparse.width(); ++j) {
      const float v = sparse.at(i, j);
      if (!(v > 0)) continue;
      std::snprintf(buf, sizeof buf, "%d,%d,%.9g\n", i, j, static_cast<double>(v));
      out += buf;
    }
  }
  return out;
}

Tensor<float> decode_sparse_csv(const std::string& text, int H, int W, const std::string& origin) {
  Tensor<float> out({H, W});
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& why) {
    throw DataError(origin + " line " + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (lineno == 1 && line.rfind("row", 0) == 0) continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cols.push_back(cell);
    if (cols.size() != 3) fail("expected 3 fields row,col,depth_m, got " + std::to_string(cols.size()));
    int r = 0, c = 0;
    float d = 0;
    auto parse_int = [&](const std::string& s, int& v, const char* what) {
      const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size()) fail(std::string("bad ") + what + " '" + s + "'");
    };
    parse_int(cols[0], r, "row");
    parse_int(cols[1], c, "col");
    const auto [p, ec] = std::from_chars(cols[2].data(), cols[2].data() + cols[2].size(), d);
    if (ec != std::errc() || p != cols[2].data() + cols[2].size()) fail("bad depth '" + cols[2] + "'");
    if (r < 0 || r >= H || c < 0 || c >= W) {
      fail("coordinate (" + std::to_string(r) + "," + std::to_string(c) + ") outside " + std::to_string(H) + "x" +
           std::to_string(W));
    }
    if (!(d > 0) || !std::isfinite(d)) fail("depth must be positive and finite, got " + cols[2]);
    out.at(r, c) = d;
  }
  return out;
}

void write_sparse_csv(const std::filesystem::path& path, const Tensor<float>& sparse) {
  write_file_atomic(path, encode_sparse_csv(sparse));
}

Tensor<float> read_sparse_csv(const std::filesystem::path& path, int H, int W) {
  return decode_sparse_csv(read_file(path), H, W, path.string());
}

std::string encode_error_png(const Tensor<float>& pred, const Tensor<float>& gt) {
  require_same_shape(pred.shape(), gt.shape(), "error map");
  if (gt.rank() != 2) throw ConfigError("error map needs H×W maps");
  const int H = gt.height(), W = gt.width();
  double max_err = 0;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (gt[i] > 0) max_err = std::max(max_err, std::abs(static_cast<double>(pred[i]) - gt[i]));
  // Each scanline: filter byte 0, then W gray bytes.
  std::string raw;
  raw.reserve(static_cast<std::size_t>(H) * (W + 1));
  for (int i = 0; i < H; ++i) {
    raw.push_back(0);
    for (int j = 0; j < W; ++j) {
      double v = 0;
      if (gt.at(i, j) > 0 && max_err > 0) v = std::abs(static_cast<double>(pred.at(i, j)) - gt.at(i, j)) / max_err;
      raw.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v))));
    }
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::string z(zlen, '\0');
  if (compress2(reinterpret_cast<Bytef*>(z.data()), &zlen, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw DataError("zlib compression failed");
  }
  z.resize(zlen);

  std::string png("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_u32be(ihdr, static_cast<std::uint32_t>(W));
  put_u32be(ihdr, static_cast<std::uint32_t>(H));
  ihdr += std::string("\x08\x00\x00\x00\x00", 5);  // 8-bit gray, deflate, no filter, no interlace
  put_chunk(png, "IHDR", ihdr);
  put_chunk(png, "IDAT", z);
  put_chunk(png, "IEND", "");
  return png;
}

void write_error_png(const std::filesystem::path& path, const Tensor<float>& pred, const Tensor<float>& gt) {
  write_file_atomic(path, encode_error_png(pred, gt));
}

}  // namespace sdr::io
