#include "prunelab/prediction_store.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "prunelab/error.hpp"
#include "text_io.hpp"

namespace prunelab {

namespace {
constexpr std::string_view kStoreMagic = "PRUNELAB-STORE v1";
static_assert(std::endian::native == std::endian::little, "store format assumes little-endian hosts");
}  // namespace

PredictionStore PredictionStore::allocate(int runs, pruning::SparsityGrid grid, const LabelMatrix& labels,
                                          std::vector<std::string> class_names) {
  if (runs < 1) throw InvalidArgument("prediction store needs at least one run");
  PredictionStore s;
  s.runs = runs;
  s.grid = std::move(grid);
  s.images = labels.rows();
  s.classes = labels.cols();
  s.labels = labels;
  s.class_names = std::move(class_names);
  s.image_ids.resize(static_cast<std::size_t>(s.images));
  for (Eigen::Index i = 0; i < s.images; ++i) s.image_ids[static_cast<std::size_t>(i)] = i;
  s.train_frequencies.assign(static_cast<std::size_t>(s.classes), std::nan(""));
  s.run_status.assign(static_cast<std::size_t>(runs), RunStatus{});
  s.probs.assign(static_cast<std::size_t>(runs) * s.grid.size() * s.slab_size(), std::nan(""));
  return s;
}

std::vector<int> PredictionStore::ok_runs() const {
  std::vector<int> out;
  for (int r = 0; r < runs; ++r) {
    if (run_status[static_cast<std::size_t>(r)].ok) out.push_back(r);
  }
  return out;
}

bool PredictionStore::operator==(const PredictionStore& o) const {
  auto same_probs = [&] {
    if (probs.size() != o.probs.size()) return false;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      const bool both_nan = std::isnan(probs[i]) && std::isnan(o.probs[i]);
      if (!both_nan && probs[i] != o.probs[i]) return false;
    }
    return true;
  };
  auto same_freqs = [&] {
    if (train_frequencies.size() != o.train_frequencies.size()) return false;
    for (std::size_t i = 0; i < train_frequencies.size(); ++i) {
      const bool both_nan = std::isnan(train_frequencies[i]) && std::isnan(o.train_frequencies[i]);
      if (!both_nan && train_frequencies[i] != o.train_frequencies[i]) return false;
    }
    return true;
  };
  if (runs != o.runs || !(grid == o.grid) || images != o.images || classes != o.classes) return false;
  if (labels.rows() != o.labels.rows() || labels.cols() != o.labels.cols() || labels != o.labels) return false;
  if (class_names != o.class_names || image_ids != o.image_ids) return false;
  if (run_status.size() != o.run_status.size()) return false;
  for (std::size_t i = 0; i < run_status.size(); ++i) {
    if (run_status[i].ok != o.run_status[i].ok || run_status[i].message != o.run_status[i].message) return false;
  }
  return same_freqs() && same_probs();
}

void PredictionStore::validate() const {
  if (runs < 1) throw InvalidArgument("store: runs must be positive");
  if (labels.rows() != images || labels.cols() != classes) throw InvalidArgument("store: label shape mismatch");
  if (class_names.size() != static_cast<std::size_t>(classes)) throw InvalidArgument("store: class name count mismatch");
  if (image_ids.size() != static_cast<std::size_t>(images)) throw InvalidArgument("store: image id count mismatch");
  if (train_frequencies.size() != static_cast<std::size_t>(classes)) throw InvalidArgument("store: train frequency count mismatch");
  if (run_status.size() != static_cast<std::size_t>(runs)) throw InvalidArgument("store: run status count mismatch");
  if (probs.size() != static_cast<std::size_t>(runs) * grid.size() * slab_size()) throw InvalidArgument("store: probability tensor size mismatch");
  for (int r : ok_runs()) {
    for (std::size_t k = 0; k < grid.size(); ++k) {
      for (double p : slab(r, k)) {
        if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("store: probability outside [0,1] in run " + std::to_string(r));
      }
    }
  }
}

void save_store(const PredictionStore& store, const std::filesystem::path& path) {
  store.validate();
  nlohmann::json index;
  index["runs"] = store.runs;
  index["grid"] = store.grid.ratios();
  index["images"] = store.images;
  index["classes"] = store.classes;
  index["class_names"] = store.class_names;
  index["image_ids"] = store.image_ids;
  std::vector<nlohmann::json> freqs;
  for (double f : store.train_frequencies) freqs.push_back(std::isfinite(f) ? nlohmann::json(f) : nlohmann::json(nullptr));
  index["train_frequencies"] = freqs;
  nlohmann::json status = nlohmann::json::array();
  for (const auto& s : store.run_status) status.push_back({{"ok", s.ok}, {"message", s.message}});
  index["run_status"] = status;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << kStoreMagic << '\n' << index.dump() << '\n';
  out.write(reinterpret_cast<const char*>(store.labels.data()), static_cast<std::streamsize>(store.labels.size()));
  out.write(reinterpret_cast<const char*>(store.probs.data()),
            static_cast<std::streamsize>(store.probs.size() * sizeof(double)));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

PredictionStore load_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != kStoreMagic) throw ParseError(path.string() + ":1: not a prediction store (bad magic)");
  if (!std::getline(in, line)) throw ParseError(path.string() + ":2: missing store index");

  PredictionStore s;
  try {
    const auto index = nlohmann::json::parse(line);
    s.runs = index.at("runs").get<int>();
    s.grid = pruning::SparsityGrid(index.at("grid").get<std::vector<double>>());
    s.images = index.at("images").get<Eigen::Index>();
    s.classes = index.at("classes").get<Eigen::Index>();
    s.class_names = index.at("class_names").get<std::vector<std::string>>();
    s.image_ids = index.at("image_ids").get<std::vector<std::int64_t>>();
    for (const auto& f : index.at("train_frequencies")) {
      s.train_frequencies.push_back(f.is_null() ? std::nan("") : f.get<double>());
    }
    for (const auto& st : index.at("run_status")) {
      s.run_status.push_back({st.at("ok").get<bool>(), st.at("message").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ":2: malformed store index: " + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(path.string() + ":2: " + e.what());
  }
  if (s.runs < 1 || s.images < 1 || s.classes < 1) throw ParseError(path.string() + ": store shapes must be positive");

  s.labels.resize(s.images, s.classes);
  in.read(reinterpret_cast<char*>(s.labels.data()), static_cast<std::streamsize>(s.labels.size()));
  s.probs.resize(static_cast<std::size_t>(s.runs) * s.grid.size() * s.slab_size());
  in.read(reinterpret_cast<char*>(s.probs.data()), static_cast<std::streamsize>(s.probs.size() * sizeof(double)));
  if (!in) throw ParseError(path.string() + ": truncated store payload");
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError(path.string() + ": trailing bytes after store payload");
  if ((s.labels.array() > 1).any()) throw ParseError(path.string() + ": non-binary label in store");
  try {
    s.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return s;
}

void save_store_csv(const PredictionStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "run,k,image_id,class,prob\n";
  for (int r = 0; r < store.runs; ++r) {
    for (std::size_t k = 0; k < store.grid.size(); ++k) {
      for (Eigen::Index i = 0; i < store.images; ++i) {
        for (Eigen::Index c = 0; c < store.classes; ++c) {
          out << r << ',' << detail::format_double(store.grid[k]) << ',' << store.image_ids[static_cast<std::size_t>(i)] << ','
              << store.class_names[static_cast<std::size_t>(c)] << ',' << detail::format_double(store.at(r, k, i, c)) << '\n';
        }
      }
    }
  }
}

}  // namespace prunelab
