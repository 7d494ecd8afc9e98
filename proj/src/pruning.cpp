#include "prunelab/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "container.hpp"
#include "prunelab/error.hpp"
#include "text_io.hpp"

namespace prunelab::pruning {

namespace {

double snap(double v) { return std::round(v * 1e10) / 1e10; }

struct WeightRef {
  std::uint32_t layer;
  std::uint32_t row;
  std::uint32_t col;
};

// Flat prunable inventory ordered by (layer, row, col).
std::vector<WeightRef> inventory(const nn::MlpModel& model) {
  std::vector<WeightRef> refs;
  refs.reserve(model.num_prunable());
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const auto& w = model.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        refs.push_back({static_cast<std::uint32_t>(l), static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c)});
      }
    }
  }
  return refs;
}

// Positions into the inventory sorted by ascending magnitude; stable sort keeps
// inventory order among equal magnitudes.
std::vector<std::size_t> magnitude_order(const nn::MlpModel& model, const std::vector<WeightRef>& refs) {
  std::vector<double> mag(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    mag[i] = std::abs(model.weights[refs[i].layer](refs[i].row, refs[i].col));
  }
  std::vector<std::size_t> order(refs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mag[a] < mag[b]; });
  return order;
}

PrunedModel apply(const nn::MlpModel& model, double k, const std::vector<WeightRef>& refs,
                  const std::vector<std::size_t>& order) {
  PrunedModel out{model, {}};
  out.mask.requested_sparsity = k;
  for (const auto& w : model.weights) out.mask.masks.push_back(WeightMask::Ones(w.rows(), w.cols()));
  const std::size_t m = prune_count(k, refs.size());
  for (std::size_t i = 0; i < m; ++i) {
    const auto& ref = refs[order[i]];
    out.model.weights[ref.layer](ref.row, ref.col) = 0.0;
    out.mask.masks[ref.layer](ref.row, ref.col) = 0;
  }
  out.mask.achieved_sparsity = refs.empty() ? 0.0 : static_cast<double>(m) / static_cast<double>(refs.size());
  return out;
}

void check_ratio(double k) {
  if (!(k >= 0.0 && k < 1.0)) {
    std::ostringstream msg;
    msg << "sparsity ratio " << k << " outside [0,1)";
    throw InvalidArgument(msg.str());
  }
}

}  // namespace

SparsityGrid::SparsityGrid(std::vector<double> ratios) : ratios_(std::move(ratios)) {
  if (ratios_.empty() || ratios_.front() != 0.0) throw InvalidArgument("sparsity grid must start at 0");
  for (std::size_t i = 0; i < ratios_.size(); ++i) {
    check_ratio(ratios_[i]);
    if (i > 0 && !(ratios_[i] > ratios_[i - 1])) throw InvalidArgument("sparsity grid must be strictly increasing");
  }
}

SparsityGrid SparsityGrid::parse(std::string_view spec) {
  std::vector<double> ratios;
  if (spec.find(':') != std::string_view::npos) {
    const auto parts = detail::split(spec, ':');
    if (parts.size() != 3) throw InvalidArgument("grid must be 'start:stop:step' or a comma list");
    auto start = detail::parse_double(parts[0]);
    auto stop = detail::parse_double(parts[1]);
    auto step = detail::parse_double(parts[2]);
    if (!start || !stop || !step || !(*step > 0.0)) throw InvalidArgument("grid: bad start/stop/step in '" + std::string(spec) + "'");
    const auto count = static_cast<long>(std::floor((*stop - *start) / *step + 1e-9));
    for (long i = 0; i <= count; ++i) ratios.push_back(snap(*start + static_cast<double>(i) * *step));
  } else {
    for (auto part : detail::split(spec, ',')) {
      auto v = detail::parse_double(part);
      if (!v) throw InvalidArgument("grid: bad ratio '" + std::string(part) + "'");
      ratios.push_back(*v);
    }
  }
  return SparsityGrid(std::move(ratios));
}

SparsityGrid SparsityGrid::standard() { return parse("0:0.95:0.05"); }

std::optional<std::size_t> SparsityGrid::index_of(double k) const {
  for (std::size_t i = 0; i < ratios_.size(); ++i) {
    if (std::abs(ratios_[i] - k) < 1e-9) return i;
  }
  return std::nullopt;
}

std::size_t PruneMask::zeros() const {
  std::size_t z = 0;
  for (const auto& m : masks) z += static_cast<std::size_t>((m.array() == 0).count());
  return z;
}

std::size_t PruneMask::total() const {
  std::size_t t = 0;
  for (const auto& m : masks) t += static_cast<std::size_t>(m.size());
  return t;
}

std::size_t prune_count(double k, std::size_t total) {
  return static_cast<std::size_t>(std::floor(k * static_cast<double>(total) + 1e-9));
}

PrunedModel l1_global_prune(const nn::MlpModel& model, double k) {
  check_ratio(k);
  const auto refs = inventory(model);
  return apply(model, k, refs, magnitude_order(model, refs));
}

std::vector<SweepEntry> sweep(const nn::MlpModel& model, const SparsityGrid& grid) {
  const auto refs = inventory(model);
  const auto order = magnitude_order(model, refs);
  std::vector<SweepEntry> out;
  out.reserve(grid.size());
  for (double k : grid.ratios()) out.push_back({k, apply(model, k, refs, order)});
  return out;
}

void save_mask(const PruneMask& mask, const std::vector<int>& layer_sizes, const std::filesystem::path& path) {
  if (layer_sizes.size() != mask.masks.size() + 1) throw InvalidArgument("save_mask: layer sizes do not match mask count");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  detail::ContainerHeader h;
  h.kind = detail::ContainerKind::mask;
  h.requested = mask.requested_sparsity;
  h.achieved = mask.achieved_sparsity;
  h.sizes = layer_sizes;
  detail::write_header(out, h);
  for (const auto& m : mask.masks) {
    const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    detail::write_array(out, rm.data(), static_cast<std::size_t>(rm.size()));
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

PruneMask load_mask(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  const auto h = detail::read_header(in, path.string());
  if (h.kind != detail::ContainerKind::mask) throw ParseError(path.string() + ": container holds a model, not a mask");
  PruneMask mask;
  mask.requested_sparsity = h.requested;
  mask.achieved_sparsity = h.achieved;
  for (std::size_t l = 0; l + 1 < h.sizes.size(); ++l) {
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(h.sizes[l + 1], h.sizes[l]);
    detail::read_array(in, rm.data(), static_cast<std::size_t>(rm.size()), path.string());
    if ((rm.array() > 1).any()) throw ParseError(path.string() + ": mask entries must be 0 or 1");
    mask.masks.emplace_back(rm);
  }
  return mask;
}

}  // namespace prunelab::pruning
