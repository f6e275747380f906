#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dustbin/array.hpp"
#include "dustbin/model.hpp"
#include "dustbin/outdist.hpp"

namespace dustbin {

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr Rgb kDustbinColor{255, 165, 0};
inline constexpr Rgb kMarkerColor{0, 0, 0};

/// Fixed colour per class id; the dustbin id (== k_classes) is orange.
std::map<int, Rgb> class_colors(std::size_t k_classes, bool with_dustbin);

struct RasterGrid {
  std::size_t width = 0;
  std::size_t height = 0;
  /// Row-major, row 0 at the top.
  std::vector<int> class_ids;
  std::map<int, Rgb> color_map;
  /// (column, row) drawn in kMarkerColor.
  std::optional<std::pair<std::size_t, std::size_t>> marker;

  int at(std::size_t col, std::size_t row) const { return class_ids.at(row * width + col); }
  std::size_t distinct_classes() const;
  /// Throws ContractError if any class id lacks a colour.
  void validate() const;
};

struct Bounds2D {
  double x_min = -3.0;
  double x_max = 3.0;
  double y_min = -3.0;
  double y_max = 3.0;
};

/// Prediction at each cell centre; column i is x_min + (i + 1/2) dx, row j is
/// y_max - (j + 1/2) dy.
RasterGrid decision_regions(const Model& model, const Bounds2D& bounds, std::size_t width, std::size_t height,
                            std::size_t threads = 1);
/// Cell centre coordinates used by decision_regions, row-major.
std::vector<std::array<double, 2>> grid_centers(const Bounds2D& bounds, std::size_t width, std::size_t height);

struct ChurchWindows {
  Array adv_direction;  // unit l2
  std::vector<Array> orthogonal;  // unit l2, orthogonal to adv_direction and to each other
  std::vector<RasterGrid> grids;
};

/// One raster per orthogonal direction over x + s d_adv + t d_orth,
/// s (columns) and t (rows, up) in [-extent, extent]. `resolution` must be odd
/// so that s = t = 0 falls exactly on the marked centre pixel.
ChurchWindows church_window(const Model& model, const Array& x, const Array& adv_direction,
                            std::size_t n_orthogonal, double extent, std::size_t resolution, std::uint64_t seed,
                            std::size_t threads = 1);

struct Projection {
  /// n x k; columns beyond `components_found` are zero.
  Array coords;
  /// k entries, non-increasing; zero beyond `components_found`.
  std::vector<double> explained_variance;
  /// components_found unit vectors of length d, mutually orthogonal.
  std::vector<Array> components;
  std::size_t components_found = 0;
  bool degenerate = false;
  std::vector<std::string> groups;
};

/// Symmetric eigen-decomposition by cyclic Jacobi rotations. Eigenvalues
/// descending, eigenvectors in columns.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> jacobi_eigen(const Eigen::MatrixXd& symmetric);

/// Top-k principal components of the rows of `features` (n x d). Each
/// component's largest-magnitude entry is made positive.
Projection pca_project(const Array& features, std::size_t k = 3, std::vector<std::string> groups = {});

// ---- emitters -------------------------------------------------------------

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Rgb> pixels;  // row-major
};

Image render(const RasterGrid& grid);
std::string ppm_bytes(const Image& image);
std::string ppm_bytes(const RasterGrid& grid);
Image parse_ppm(std::string_view bytes);
void write_ppm(const RasterGrid& grid, const std::string& path);
void write_ppm(const Image& image, const std::string& path);
Image read_ppm(const std::string& path);
/// Class ids recovered from colours via the grid's colour map (marker excluded).
std::vector<int> recover_classes(const Image& image, const std::map<int, Rgb>& color_map);

/// Bar chart, one bar per class, heights proportional to counts.
Image histogram_image(const MisclassHistogram& histogram, std::size_t bar_width = 16, std::size_t height = 96);

/// "group,pc1,...,pck" rows preceded by a "# explained_variance,..." line.
std::string projection_csv(const Projection& projection);

}  // namespace dustbin
