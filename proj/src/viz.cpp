#include "dustbin/viz.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "dustbin/io.hpp"
#include "dustbin/parallel.hpp"
#include "dustbin/rng.hpp"

namespace dustbin {

namespace {

constexpr Rgb kPalette[] = {
    {31, 119, 180}, {44, 160, 44},   {214, 39, 40},  {148, 103, 189}, {140, 86, 75},
    {227, 119, 194}, {127, 127, 127}, {188, 189, 34}, {23, 190, 207},  {0, 0, 128},
};

Rgb class_color(std::size_t k) {
  if (k < std::size(kPalette)) return kPalette[k];
  // Never black or orange: every channel stays in [50, 249].
  return {static_cast<std::uint8_t>(50 + (k * 67) % 200), static_cast<std::uint8_t>(50 + (k * 131) % 200),
          static_cast<std::uint8_t>(50 + (k * 197) % 200)};
}

void require_2d(const Model& model) {
  if (model.config().input_shape != Shape{2}) {
    throw ContractError("decision regions need a 2-D input model, got input shape " +
                        shape_string(model.config().input_shape));
  }
}

}  // namespace

std::map<int, Rgb> class_colors(std::size_t k_classes, bool with_dustbin) {
  std::map<int, Rgb> m;
  for (std::size_t k = 0; k < k_classes; ++k) m[static_cast<int>(k)] = class_color(k);
  if (with_dustbin) m[static_cast<int>(k_classes)] = kDustbinColor;
  return m;
}

std::size_t RasterGrid::distinct_classes() const {
  return std::set<int>(class_ids.begin(), class_ids.end()).size();
}

void RasterGrid::validate() const {
  if (class_ids.size() != width * height) {
    throw ContractError("raster has " + std::to_string(class_ids.size()) + " cells for " + std::to_string(width) +
                        "x" + std::to_string(height));
  }
  for (int c : class_ids) {
    if (!color_map.contains(c)) throw ContractError("raster class " + std::to_string(c) + " has no colour");
  }
  if (marker && (marker->first >= width || marker->second >= height)) throw ContractError("marker outside raster");
}

std::vector<std::array<double, 2>> grid_centers(const Bounds2D& b, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw ConfigError("raster resolution must be positive");
  if (!(b.x_max > b.x_min && b.y_max > b.y_min)) throw ConfigError("raster bounds are empty");
  const double dx = (b.x_max - b.x_min) / static_cast<double>(width);
  const double dy = (b.y_max - b.y_min) / static_cast<double>(height);
  std::vector<std::array<double, 2>> out;
  out.reserve(width * height);
  for (std::size_t j = 0; j < height; ++j) {
    for (std::size_t i = 0; i < width; ++i) {
      out.push_back({b.x_min + (static_cast<double>(i) + 0.5) * dx, b.y_max - (static_cast<double>(j) + 0.5) * dy});
    }
  }
  return out;
}

RasterGrid decision_regions(const Model& model, const Bounds2D& bounds, std::size_t width, std::size_t height,
                            std::size_t threads) {
  require_2d(model);
  const auto centers = grid_centers(bounds, width, height);
  RasterGrid grid;
  grid.width = width;
  grid.height = height;
  grid.class_ids.resize(centers.size());
  grid.color_map = class_colors(model.k_classes(), model.augmented());
  parallel_for(height, threads, [&](std::size_t row) {
    std::vector<Array> xs;
    xs.reserve(width);
    for (std::size_t i = 0; i < width; ++i) {
      const auto& c = centers[row * width + i];
      xs.push_back(Array({2}, {c[0], c[1]}));
    }
    const auto labels = predict(model, xs);
    for (std::size_t i = 0; i < width; ++i) grid.class_ids[row * width + i] = static_cast<int>(labels[i]);
  });
  return grid;
}

ChurchWindows church_window(const Model& model, const Array& x, const Array& adv_direction,
                            std::size_t n_orthogonal, double extent, std::size_t resolution, std::uint64_t seed,
                            std::size_t threads) {
  if (adv_direction.shape() != x.shape()) throw DimensionError("adversarial direction shape differs from x");
  if (n_orthogonal < 1) throw ConfigError("church window needs at least one orthogonal direction");
  if (resolution < 3 || resolution % 2 == 0) throw ConfigError("church window resolution must be odd and >= 3");
  if (!(extent > 0.0)) throw ConfigError("church window extent must be positive");
  const std::size_t d = x.size();
  if (n_orthogonal + 1 > d) {
    throw ContractError("cannot draw " + std::to_string(n_orthogonal) + " orthogonal directions in dimension " +
                        std::to_string(d));
  }
  const double norm = adv_direction.values().norm();
  if (!(norm >= 1e-12)) throw NumericError("adversarial direction is degenerate (norm < 1e-12)");

  ChurchWindows out;
  out.adv_direction = Array(x.shape(), adv_direction.values() / norm);
  std::vector<Eigen::VectorXd> basis{out.adv_direction.values()};
  Rng rng(seed);
  while (out.orthogonal.size() < n_orthogonal) {
    Eigen::VectorXd v(d);
    for (std::size_t i = 0; i < d; ++i) v[static_cast<Eigen::Index>(i)] = rng.normal();
    // Two Gram-Schmidt passes keep the dot products at rounding level.
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) v -= v.dot(b) * b;
    }
    const double n = v.norm();
    if (n < 1e-6) continue;
    v /= n;
    basis.push_back(v);
    out.orthogonal.emplace_back(x.shape(), v);
  }

  const std::size_t r = resolution;
  const std::size_t half = (r - 1) / 2;
  auto coord = [&](std::size_t i) {
    return extent * (2.0 * static_cast<double>(i) - static_cast<double>(r - 1)) / static_cast<double>(r - 1);
  };
  const auto colors = class_colors(model.k_classes(), model.augmented());
  for (const auto& orth : out.orthogonal) {
    RasterGrid grid;
    grid.width = r;
    grid.height = r;
    grid.class_ids.resize(r * r);
    grid.color_map = colors;
    grid.marker = {half, half};
    parallel_for(r, threads, [&](std::size_t row) {
      const double t = coord(r - 1 - row);
      for (std::size_t col = 0; col < r; ++col) {
        const double s = coord(col);
        const Array p(x.shape(), x.values() + s * out.adv_direction.values() + t * orth.values());
        grid.class_ids[row * r + col] = static_cast<int>(predict(model, p));
      }
    });
    out.grids.push_back(std::move(grid));
  }
  return out;
}

// ---- PPM -------------------------------------------------------------------

Image render(const RasterGrid& grid) {
  grid.validate();
  Image img{grid.width, grid.height, {}};
  img.pixels.reserve(grid.class_ids.size());
  for (int c : grid.class_ids) img.pixels.push_back(grid.color_map.at(c));
  if (grid.marker) img.pixels[grid.marker->second * grid.width + grid.marker->first] = kMarkerColor;
  return img;
}

std::string ppm_bytes(const Image& image) {
  if (image.pixels.size() != image.width * image.height) throw ContractError("image pixel count mismatch");
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.reserve(out.size() + 3 * image.pixels.size());
  for (const auto& p : image.pixels) {
    for (auto c : p) out.push_back(static_cast<char>(c));
  }
  return out;
}

std::string ppm_bytes(const RasterGrid& grid) { return ppm_bytes(render(grid)); }

Image parse_ppm(std::string_view bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw ParseError("PPM header truncated");
    return std::string(bytes.substr(start, pos - start));
  };
  auto number = [&](const char* what) {
    const auto t = token();
    if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      throw ParseError(std::string("PPM ") + what + " is not a number: '" + t + "'");
    }
    return static_cast<std::size_t>(std::stoull(t));
  };
  if (token() != "P6") throw ParseError("not a binary PPM (P6) file");
  Image img;
  img.width = number("width");
  img.height = number("height");
  if (number("maxval") != 255) throw ParseError("only maxval 255 PPM files are supported");
  if (pos >= bytes.size()) throw ParseError("PPM header truncated");
  ++pos;  // single whitespace before the raster
  const std::size_t n = img.width * img.height;
  if (bytes.size() - pos != 3 * n) {
    throw ParseError("PPM raster holds " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                     std::to_string(3 * n));
  }
  img.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) img.pixels[i][c] = static_cast<std::uint8_t>(bytes[pos + 3 * i + c]);
  }
  return img;
}

void write_ppm(const RasterGrid& grid, const std::string& path) { write_file(path, ppm_bytes(grid)); }
void write_ppm(const Image& image, const std::string& path) { write_file(path, ppm_bytes(image)); }
Image read_ppm(const std::string& path) { return parse_ppm(read_file(path)); }

std::vector<int> recover_classes(const Image& image, const std::map<int, Rgb>& color_map) {
  std::map<Rgb, int> inverse;
  for (const auto& [k, c] : color_map) {
    if (!inverse.emplace(c, k).second) throw ContractError("colour map is not injective");
  }
  std::vector<int> out;
  out.reserve(image.pixels.size());
  for (const auto& p : image.pixels) {
    const auto it = inverse.find(p);
    out.push_back(it == inverse.end() ? -1 : it->second);
  }
  return out;
}

Image histogram_image(const MisclassHistogram& histogram, std::size_t bar_width, std::size_t height) {
  if (bar_width == 0 || height == 0) throw ConfigError("histogram image dimensions must be positive");
  const std::size_t k = histogram.counts.size();
  const std::size_t gap = std::max<std::size_t>(1, bar_width / 4);
  Image img;
  img.width = k * (bar_width + gap) + gap;
  img.height = height;
  img.pixels.assign(img.width * img.height, Rgb{255, 255, 255});
  const std::size_t peak = k == 0 ? 0 : *std::max_element(histogram.counts.begin(), histogram.counts.end());
  for (std::size_t c = 0; c < k; ++c) {
    // Integer arithmetic keeps the bitmap exact across platforms.
    const std::size_t bar = peak == 0 ? 0 : (histogram.counts[c] * height + peak / 2) / peak;
    const std::size_t x0 = gap + c * (bar_width + gap);
    for (std::size_t row = height - bar; row < height; ++row) {
      for (std::size_t col = x0; col < x0 + bar_width; ++col) img.pixels[row * img.width + col] = class_color(c);
    }
  }
  return img;
}

std::string projection_csv(const Projection& p) {
  const std::size_t k = p.explained_variance.size();
  std::ostringstream os;
  os << std::setprecision(17);
  os << "# explained_variance";
  for (double v : p.explained_variance) os << ',' << v;
  os << "\n# degenerate," << (p.degenerate ? 1 : 0) << '\n';
  os << "group";
  for (std::size_t c = 0; c < k; ++c) os << ",pc" << (c + 1);
  os << '\n';
  const std::size_t n = p.coords.rank() == 2 ? p.coords.shape()[0] : 0;
  for (std::size_t i = 0; i < n; ++i) {
    os << (i < p.groups.size() ? p.groups[i] : "");
    for (std::size_t c = 0; c < k; ++c) os << ',' << p.coords[i * k + c];
    os << '\n';
  }
  return os.str();
}

}  // namespace dustbin
