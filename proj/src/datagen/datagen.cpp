#include "sdr/datagen/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace sdr::datagen {
namespace {

struct Plane {
  double base, gx, gy;  // depth = base + gx·(x - x0) + gy·(y - y0)
  double x0, y0;
  double eval(double x, double y) const { return base + gx * (x - x0) + gy * (y - y0); }
};

struct Segment {
  std::array<double, 3> albedo;
  double tex_fx, tex_fy, tex_phase, tex_amp;
};

Segment random_segment(Rng& rng) {
  Segment s;
  for (auto& a : s.albedo) a = rng.uniform(0.25, 1.0);
  s.tex_fx = rng.uniform(0.2, 1.2);
  s.tex_fy = rng.uniform(0.2, 1.2);
  s.tex_phase = rng.uniform(0.0, 2 * std::numbers::pi);
  s.tex_amp = rng.uniform(0.03, 0.12);
  return s;
}

}  // namespace

Scene gen_scene(std::uint64_t seed, int H, int W, int complexity, DepthRange range) {
  if (H < 16 || W < 16) throw ConfigError("gen_scene: H and W must be >= 16");
  if (complexity < 0) throw ConfigError("gen_scene: complexity must be >= 0");
  if (!(range.min > 0) || !(range.max > range.min)) throw ConfigError("gen_scene: invalid depth range");
  Rng rng(seed);
  const double span = range.max - range.min;

  // Background: farther toward the top of the image, like a floor meeting a wall.
  Plane bg;
  bg.x0 = W / 2.0;
  bg.y0 = H / 2.0;
  bg.base = range.min + span * rng.uniform(0.35, 0.65);
  bg.gy = -span * rng.uniform(0.1, 0.35) / H;
  bg.gx = span * rng.uniform(-0.15, 0.15) / W;

  std::vector<Segment> segments{random_segment(rng)};
  Tensor<float> depth({H, W});
  std::vector<int> label(static_cast<std::size_t>(H) * W, 0);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) depth.at(i, j) = static_cast<float>(bg.eval(j, i));

  if (complexity > 0) {
    const int n_objects = static_cast<int>(rng.uniform_int(2, 6));
    for (int k = 0; k < n_objects; ++k) {
      const int h = static_cast<int>(rng.uniform_int(H / 5, H / 2));
      const int w = static_cast<int>(rng.uniform_int(W / 5, W / 2));
      const int top = static_cast<int>(rng.uniform_int(0, H - h));
      const int left = static_cast<int>(rng.uniform_int(0, W - w));
      Plane pl;
      pl.x0 = left + w / 2.0;
      pl.y0 = top + h / 2.0;
      pl.base = range.min + span * rng.uniform(0.05, 0.45);
      const bool slanted = rng.uniform() < 0.5;
      pl.gx = slanted ? span * rng.uniform(-0.3, 0.3) / W : 0.0;
      pl.gy = slanted ? span * rng.uniform(-0.3, 0.3) / H : 0.0;
      segments.push_back(random_segment(rng));
      const int id = static_cast<int>(segments.size()) - 1;
      for (int i = top; i < top + h; ++i) {
        for (int j = left; j < left + w; ++j) {
          const double d = pl.eval(j, i);
          // Nearer surfaces occlude.
          if (d < depth.at(i, j)) {
            depth.at(i, j) = static_cast<float>(d);
            label[static_cast<std::size_t>(i) * W + j] = id;
          }
        }
      }
    }
  }
  for (auto& v : depth.vec()) v = static_cast<float>(std::clamp<double>(v, range.min, range.max));

  // Lambertian-ish shading from the depth gradient, light from the upper left.
  const double lx = -0.4, ly = -0.5, lz = 0.77;
  Tensor<float> image({3, H, W});
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      const int jl = std::max(j - 1, 0), jr = std::min(j + 1, W - 1);
      const int iu = std::max(i - 1, 0), id = std::min(i + 1, H - 1);
      const int seg = label[static_cast<std::size_t>(i) * W + j];
      // Gradient within the segment only, so occlusion edges do not shade.
      auto same = [&](int a, int b) { return label[static_cast<std::size_t>(a) * W + b] == seg; };
      const double dzdx = same(i, jl) && same(i, jr) && jr > jl ? (depth.at(i, jr) - depth.at(i, jl)) / (jr - jl) : 0;
      const double dzdy = same(iu, j) && same(id, j) && id > iu ? (depth.at(id, j) - depth.at(iu, j)) / (id - iu) : 0;
      const double nx = -dzdx * 4, ny = -dzdy * 4, nz = 1;
      const double nn = std::sqrt(nx * nx + ny * ny + nz * nz);
      const double shade = 0.35 + 0.65 * std::max(0.0, (nx * lx + ny * ly + nz * lz) / nn);
      const Segment& s = segments[seg];
      const double tex = 1 + s.tex_amp * std::sin(s.tex_fx * j + s.tex_fy * i + s.tex_phase);
      // Mild distance falloff ties brightness to depth.
      const double falloff = 1.0 - 0.3 * (depth.at(i, j) - range.min) / span;
      for (int c = 0; c < 3; ++c) {
        image.at(c, i, j) = static_cast<float>(std::clamp(s.albedo[c] * tex * shade * falloff, 0.0, 1.0));
      }
    }
  }
  return {std::move(image), std::move(depth), seed};
}

Tensor<double> bias_field(std::uint64_t seed, int H, int W, double severity) {
  if (!(severity >= 0 && severity <= 1)) throw ConfigError("simulate_mde: severity must lie in [0, 1]");
  Rng rng(seed);
  const double amp = 0.3 * severity;
  // Weights sum to at most 1 in absolute value, so |B| <= amp.
  const double global = rng.uniform(-0.5, 0.5);
  constexpr int kTerms = 3;
  std::array<double, kTerms> w{}, fx{}, fy{}, ph{};
  for (int k = 0; k < kTerms; ++k) {
    w[k] = rng.uniform(-1.0, 1.0) * (0.5 / kTerms);
    fx[k] = rng.uniform(-1.0, 1.0) * std::numbers::pi / W;
    fy[k] = rng.uniform(-1.0, 1.0) * std::numbers::pi / H;
    ph[k] = rng.uniform(0.0, 2 * std::numbers::pi);
  }
  Tensor<double> b({H, W});
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      double v = global;
      for (int k = 0; k < kTerms; ++k) v += w[k] * std::sin(fx[k] * j + fy[k] * i + ph[k]);
      b.at(i, j) = amp * v;
    }
  }
  return b;
}

Tensor<float> apply_bias(const Tensor<float>& gt, const Tensor<double>& bias, bool edge_blur) {
  require_same_shape(gt.shape(), bias.shape(), "apply_bias");
  const int H = gt.height(), W = gt.width();
  Tensor<float> d({H, W});
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<float>(gt[i] * std::exp(bias[i]));
  if (!edge_blur) return d;
  // Estimators smear depth discontinuities: average 3×3 where the relative
  // jump to any 4-neighbour exceeds 5%.
  Tensor<float> out = d;
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      const float c = gt.at(i, j);
      bool edge = false;
      const int di[4] = {-1, 1, 0, 0}, dj[4] = {0, 0, -1, 1};
      for (int t = 0; t < 4 && !edge; ++t) {
        const int ni = i + di[t], nj = j + dj[t];
        if (ni < 0 || ni >= H || nj < 0 || nj >= W) continue;
        edge = std::abs(gt.at(ni, nj) - c) > 0.05f * c;
      }
      if (!edge) continue;
      double s = 0;
      int n = 0;
      for (int a = std::max(0, i - 1); a <= std::min(H - 1, i + 1); ++a)
        for (int b = std::max(0, j - 1); b <= std::min(W - 1, j + 1); ++b) {
          if (d.at(a, b) > 0) {
            s += d.at(a, b);
            ++n;
          }
        }
      if (n) out.at(i, j) = static_cast<float>(s / n);
    }
  }
  return out;
}

Tensor<float> simulate_mde(const Tensor<float>& gt, std::uint64_t seed, double severity) {
  if (gt.rank() != 2) throw ConfigError("simulate_mde: depth must be H×W");
  const Tensor<double> b = bias_field(seed, gt.height(), gt.width(), severity);
  if (severity == 0) return gt;
  return apply_bias(gt, b, true);
}

Tensor<float> sample_points(const Tensor<float>& gt, int s, std::uint64_t seed) {
  if (s < 0) throw ConfigError("sample_points: s must be >= 0");
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (gt[i] > 0) valid.push_back(i);
  if (static_cast<std::size_t>(s) > valid.size()) {
    throw DataError("sample_points: s = " + std::to_string(s) + " exceeds valid pixel count " +
                    std::to_string(valid.size()));
  }
  Rng rng(seed);
  Tensor<float> out(gt.shape());
  // Partial Fisher-Yates: the first s slots are a uniform sample without replacement.
  for (int k = 0; k < s; ++k) {
    const auto r = static_cast<std::size_t>(rng.uniform_int(k, static_cast<std::int64_t>(valid.size()) - 1));
    std::swap(valid[k], valid[r]);
    out[valid[k]] = gt[valid[k]];
  }
  return out;
}

std::vector<int> line_rows(int H, int n_lines, std::uint64_t seed) {
  if (n_lines < 1 || n_lines > H) {
    throw ConfigError("sample_lines: n_lines must lie in [1, " + std::to_string(H) + "], got " +
                      std::to_string(n_lines));
  }
  Rng rng(seed);
  const int spacing = H / n_lines;
  const int offset = static_cast<int>(rng.uniform_int(0, spacing - 1));
  std::vector<int> rows(n_lines);
  for (int k = 0; k < n_lines; ++k) rows[k] = offset + static_cast<int>(static_cast<long long>(k) * H / n_lines);
  return rows;
}

Tensor<float> sample_lines(const Tensor<float>& gt, int n_lines, std::uint64_t seed) {
  Tensor<float> out(gt.shape());
  for (int r : line_rows(gt.height(), n_lines, seed))
    for (int j = 0; j < gt.width(); ++j) out.at(r, j) = gt.at(r, j) > 0 ? gt.at(r, j) : 0.0f;
  return out;
}

Rect centered_hole(int H, int W) { return {H / 4, W / 4, H / 2, W / 2}; }

HoleSample mask_hole(const Tensor<float>& sparse, const Rect& rect) {
  const int H = sparse.height(), W = sparse.width();
  if (rect.top < 0 || rect.left < 0 || rect.height < 0 || rect.width < 0 || rect.top + rect.height > H ||
      rect.left + rect.width > W) {
    throw ConfigError("mask_hole: rectangle outside the " + std::to_string(H) + "x" + std::to_string(W) + " map");
  }
  HoleSample out{sparse, Tensor<float>(sparse.shape())};
  for (int i = rect.top; i < rect.top + rect.height; ++i) {
    for (int j = rect.left; j < rect.left + rect.width; ++j) {
      out.sparse.at(i, j) = 0;
      out.region.at(i, j) = 1;
    }
  }
  return out;
}

int scale_sparsity(int s, int H, int W) {
  const double area = static_cast<double>(H) * W;
  if (area >= kReferenceArea) return s;
  return std::max(1, static_cast<int>(std::lround(s * area / kReferenceArea)));
}

void validate(const SparsityProtocol& p) {
  if (p.kind == SparsityKind::Points) {
    if (p.min_points < 1 || p.max_points < p.min_points) {
      throw ConfigError("sparsity: need 1 <= min_points <= max_points");
    }
  } else {
    if (p.line_choices.empty()) throw ConfigError("sparsity: line_choices must not be empty");
    for (int n : p.line_choices)
      if (n < 1) throw ConfigError("sparsity: line counts must be >= 1");
  }
}

int draw_sparsity(const SparsityProtocol& protocol, Rng& rng, int H, int W) {
  validate(protocol);
  if (protocol.kind == SparsityKind::Points) {
    int s = static_cast<int>(rng.uniform_int(protocol.min_points, protocol.max_points));
    if (protocol.area_scaling) s = scale_sparsity(s, H, W);
    return std::min(s, H * W);
  }
  std::vector<int> choices;
  for (int n : protocol.line_choices)
    if (n <= H) choices.push_back(n);
  if (choices.empty()) return H;
  return choices[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(choices.size()) - 1))];
}

}  // namespace sdr::datagen
