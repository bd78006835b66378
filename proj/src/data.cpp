#include "hsc/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace hsc {

namespace {

void write_u32le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32le(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw DataError(std::string("truncated cube file while reading ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32le(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32le(out, bits);
}

std::size_t checked_cube_size(std::uint32_t rows, std::uint32_t cols, std::uint32_t bands) {
  if (rows == 0 || cols == 0 || bands == 0)
    throw DataError("cube extents must be positive");
  constexpr std::uint64_t limit = 1ull << 31;
  std::uint64_t n = static_cast<std::uint64_t>(rows) * cols;
  if (n >= limit || n * bands >= limit)
    throw DataError("cube extent overflow: " + std::to_string(rows) + "x" + std::to_string(cols) +
                    "x" + std::to_string(bands));
  return static_cast<std::size_t>(n * bands);
}

int require_angle(int angle) {
  if (angle != 90 && angle != 180 && angle != 270)
    throw DataError("rotation angle must be 90, 180, or 270; got " + std::to_string(angle));
  return angle;
}

// Clockwise rotation source coordinate for destination (r, c) in a p x p grid.
std::pair<int, int> rotation_source(int angle, int p, int r, int c) {
  switch (angle) {
    case 90: return {p - 1 - c, r};
    case 180: return {p - 1 - r, p - 1 - c};
    default: return {c, p - 1 - r};
  }
}

void rotate_plane(int angle, int p, int bands, const double* src, double* dst) {
  for (int r = 0; r < p; ++r)
    for (int c = 0; c < p; ++c) {
      auto [sr, sc] = rotation_source(angle, p, r, c);
      const double* from = src + (static_cast<std::size_t>(sr) * p + sc) * bands;
      double* to = dst + (static_cast<std::size_t>(r) * p + c) * bands;
      std::copy(from, from + bands, to);
    }
}

std::vector<int> all_indices(int n) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  return idx;
}

struct PixelRGB {
  unsigned char r, g, b;
  bool operator==(const PixelRGB& o) const { return r == o.r && g == o.g && b == o.b; }
};

PixelRGB hsv_byte(double hue_deg, double s, double v) {
  double c = v * s;
  double hp = hue_deg / 60.0;
  double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  double m = v - c;
  auto q = [&](double t) { return static_cast<unsigned char>(std::lround((t + m) * 255.0)); };
  return {q(r), q(g), q(b)};
}

// Fixed palette: class 0 black, classes 1..30 distinct saturated colors.
std::vector<PixelRGB> class_palette() {
  std::vector<PixelRGB> pal;
  pal.push_back({0, 0, 0});
  for (int k = 0; k < 30; ++k)
    pal.push_back(hsv_byte(k * 12.0, 0.85, (k % 2 == 0) ? 1.0 : 0.65));
  return pal;
}

// Shared header reader for P5/P6: magic, cols, rows, maxval (with # comments).
void read_netpbm_header(std::istream& in, const char* magic, int& rows, int& cols,
                        const std::string& path) {
  std::string token;
  in >> token;
  if (token != magic)
    throw DataError("bad magic in " + path + ": expected " + magic + ", got '" + token + "'");
  auto next_int = [&](const char* what) {
    std::string t;
    while (in >> t) {
      if (t[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return std::stoi(t);
    }
    throw DataError(std::string("truncated header in ") + path + " while reading " + what);
  };
  cols = next_int("width");
  rows = next_int("height");
  int maxval = next_int("maxval");
  if (maxval != 255)
    throw DataError("unsupported maxval " + std::to_string(maxval) + " in " + path);
  in.get();  // single whitespace before payload
}

}  // namespace

Modality modality_from_string(const std::string& s) {
  if (s == "hsi") return Modality::hsi;
  if (s == "dsm") return Modality::dsm;
  if (s == "sar") return Modality::sar;
  throw DataError("unknown modality '" + s + "' (expected hsi|dsm|sar)");
}

std::string modality_name(Modality m) {
  switch (m) {
    case Modality::hsi: return "hsi";
    case Modality::dsm: return "dsm";
    default: return "sar";
  }
}

void save_cube(const HsiCube& cube, const std::string& path) {
  std::size_t expect = checked_cube_size(static_cast<std::uint32_t>(cube.rows),
                                         static_cast<std::uint32_t>(cube.cols),
                                         static_cast<std::uint32_t>(cube.bands));
  if (cube.values.size() != expect)
    throw DataError("cube value buffer holds " + std::to_string(cube.values.size()) +
                    " values, extents require " + std::to_string(expect));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write cube file " + path);
  out.write("HSC1", 4);
  write_u32le(out, static_cast<std::uint32_t>(cube.rows));
  write_u32le(out, static_cast<std::uint32_t>(cube.cols));
  write_u32le(out, static_cast<std::uint32_t>(cube.bands));
  char tag = static_cast<char>(cube.modality);
  out.write(&tag, 1);
  for (float v : cube.values) write_f32le(out, v);
  if (!out) throw DataError("write failure on cube file " + path);
}

HsiCube load_cube(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open cube file " + path);
  char magic[4];
  if (!in.read(magic, 4)) throw DataError("truncated cube file " + path + ": no magic");
  if (std::memcmp(magic, "HSC1", 4) != 0)
    throw DataError("bad magic in cube file " + path + ": expected HSC1, got '" +
                    std::string(magic, 4) + "'");
  HsiCube cube;
  cube.rows = static_cast<int>(read_u32le(in, "rows"));
  cube.cols = static_cast<int>(read_u32le(in, "cols"));
  cube.bands = static_cast<int>(read_u32le(in, "bands"));
  std::size_t n = checked_cube_size(static_cast<std::uint32_t>(cube.rows),
                                    static_cast<std::uint32_t>(cube.cols),
                                    static_cast<std::uint32_t>(cube.bands));
  char tag;
  if (!in.read(&tag, 1)) throw DataError("truncated cube file " + path + ": no modality tag");
  if (tag < 0 || tag > 2)
    throw DataError("unknown modality tag " + std::to_string(static_cast<int>(tag)) + " in " +
                    path);
  cube.modality = static_cast<Modality>(tag);
  cube.values.resize(n);
  std::vector<unsigned char> raw(n * 4);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw DataError("truncated cube file " + path + ": payload short of " + std::to_string(n) +
                    " values");
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = static_cast<std::uint32_t>(raw[4 * i]) |
                         (static_cast<std::uint32_t>(raw[4 * i + 1]) << 8) |
                         (static_cast<std::uint32_t>(raw[4 * i + 2]) << 16) |
                         (static_cast<std::uint32_t>(raw[4 * i + 3]) << 24);
    std::memcpy(&cube.values[i], &bits, 4);
  }
  return cube;
}

int LabelMask::nonzero_count() const {
  int n = 0;
  for (std::uint8_t v : labels) n += (v != 0);
  return n;
}

int LabelMask::max_label() const {
  std::uint8_t m = 0;
  for (std::uint8_t v : labels) m = std::max(m, v);
  return m;
}

void save_mask_pgm(const LabelMask& mask, const std::string& path) {
  if (mask.labels.size() != static_cast<std::size_t>(mask.rows) * mask.cols)
    throw DataError("mask buffer does not match extents");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write mask file " + path);
  out << "P5\n" << mask.cols << " " << mask.rows << "\n255\n";
  out.write(reinterpret_cast<const char*>(mask.labels.data()),
            static_cast<std::streamsize>(mask.labels.size()));
}

LabelMask load_mask_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open mask file " + path);
  LabelMask mask;
  read_netpbm_header(in, "P5", mask.rows, mask.cols, path);
  mask.labels.resize(static_cast<std::size_t>(mask.rows) * mask.cols);
  if (!in.read(reinterpret_cast<char*>(mask.labels.data()),
               static_cast<std::streamsize>(mask.labels.size())))
    throw DataError("truncated mask file " + path);
  return mask;
}

void save_class_map_ppm(const LabelMask& map, const std::string& path) {
  auto pal = class_palette();
  if (map.max_label() >= static_cast<int>(pal.size()))
    throw DataError("class map label " + std::to_string(map.max_label()) +
                    " exceeds palette size " + std::to_string(pal.size() - 1));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write map file " + path);
  out << "P6\n" << map.cols << " " << map.rows << "\n255\n";
  for (std::uint8_t v : map.labels) {
    const PixelRGB& px = pal[v];
    out.put(static_cast<char>(px.r));
    out.put(static_cast<char>(px.g));
    out.put(static_cast<char>(px.b));
  }
}

LabelMask load_class_map_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open map file " + path);
  LabelMask map;
  read_netpbm_header(in, "P6", map.rows, map.cols, path);
  auto pal = class_palette();
  std::size_t n = static_cast<std::size_t>(map.rows) * map.cols;
  map.labels.resize(n);
  std::vector<unsigned char> raw(n * 3);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw DataError("truncated map file " + path);
  for (std::size_t i = 0; i < n; ++i) {
    PixelRGB px{raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]};
    auto it = std::find(pal.begin(), pal.end(), px);
    if (it == pal.end())
      throw DataError("pixel color in " + path + " is not in the class palette");
    map.labels[i] = static_cast<std::uint8_t>(it - pal.begin());
  }
  return map;
}

HsiCube minmax_normalize(const HsiCube& cube) {
  HsiCube out = cube;
  std::size_t plane = static_cast<std::size_t>(cube.rows) * cube.cols;
  for (int b = 0; b < cube.bands; ++b) {
    float* vals = out.values.data() + plane * b;
    float lo = vals[0], hi = vals[0];
    for (std::size_t i = 1; i < plane; ++i) {
      lo = std::min(lo, vals[i]);
      hi = std::max(hi, vals[i]);
    }
    if (lo == hi) {
      std::fill(vals, vals + plane, 0.0f);
    } else {
      float range = hi - lo;
      for (std::size_t i = 0; i < plane; ++i) vals[i] = (vals[i] - lo) / range;
    }
  }
  return out;
}

PatchSet extract_patches(const std::vector<const HsiCube*>& cubes, const LabelMask& mask, int p) {
  if (p < 1 || p % 2 == 0) throw DataError("patch size must be odd, got " + std::to_string(p));
  if (cubes.empty()) throw DataError("patch extraction needs at least one cube");
  for (const HsiCube* c : cubes)
    if (c->rows != mask.rows || c->cols != mask.cols)
      throw DataError("modality extent mismatch: cube " + std::to_string(c->rows) + "x" +
                      std::to_string(c->cols) + " vs mask " + std::to_string(mask.rows) + "x" +
                      std::to_string(mask.cols));

  PatchSet set;
  set.p = p;
  for (const HsiCube* c : cubes) set.band_counts.push_back(c->bands);
  set.patches.resize(cubes.size());
  int half = p / 2;
  for (int r = 0; r < mask.rows; ++r)
    for (int c = 0; c < mask.cols; ++c) {
      if (mask.at(r, c) == 0) continue;
      set.labels.push_back(mask.at(r, c));
      set.coords.emplace_back(r, c);
      for (std::size_t m = 0; m < cubes.size(); ++m) {
        const HsiCube& cube = *cubes[m];
        for (int pr = 0; pr < p; ++pr)
          for (int pc = 0; pc < p; ++pc) {
            int rr = r + pr - half, cc = c + pc - half;
            bool inside = rr >= 0 && rr < cube.rows && cc >= 0 && cc < cube.cols;
            for (int b = 0; b < cube.bands; ++b)
              set.patches[m].push_back(inside ? static_cast<double>(cube.at(rr, cc, b)) : 0.0);
          }
      }
      for (int b = 0; b < cubes[0]->bands; ++b)
        set.centers.push_back(static_cast<double>(cubes[0]->at(r, c, b)));
    }
  return set;
}

PatchSet extract_patches(const HsiCube& cube, const LabelMask& mask, int p) {
  return extract_patches(std::vector<const HsiCube*>{&cube}, mask, p);
}

PatchSet rotate_augment(const PatchSet& set, const std::vector<int>& angles) {
  for (std::size_t i = 0; i < angles.size(); ++i) {
    require_angle(angles[i]);
    for (std::size_t j = i + 1; j < angles.size(); ++j)
      if (angles[i] == angles[j])
        throw DataError("duplicate rotation angle " + std::to_string(angles[i]));
  }
  PatchSet out = set;
  int n = set.count(), p = set.p;
  for (int angle : angles) {
    for (int s = 0; s < n; ++s) {
      out.labels.push_back(set.labels[static_cast<std::size_t>(s)]);
      out.coords.push_back(set.coords[static_cast<std::size_t>(s)]);
      for (int b = 0; b < set.band_counts[0]; ++b)
        out.centers.push_back(set.centers[static_cast<std::size_t>(s) * set.band_counts[0] + b]);
      for (int m = 0; m < set.modality_count(); ++m) {
        int bands = set.band_counts[static_cast<std::size_t>(m)];
        std::size_t per = static_cast<std::size_t>(p) * p * bands;
        std::vector<double> rotated(per);
        rotate_plane(angle, p, bands,
                     set.patches[static_cast<std::size_t>(m)].data() + per * s, rotated.data());
        auto& dst = out.patches[static_cast<std::size_t>(m)];
        dst.insert(dst.end(), rotated.begin(), rotated.end());
      }
    }
  }
  return out;
}

Tensor patches_tensor(const PatchSet& set, int modality, const std::vector<int>& indices) {
  if (modality < 0 || modality >= set.modality_count())
    throw DataError("modality index " + std::to_string(modality) + " out of range");
  std::vector<int> all = indices.empty() ? all_indices(set.count()) : std::vector<int>{};
  const std::vector<int>& use = indices.empty() ? all : indices;
  int p = set.p, bands = set.band_counts[static_cast<std::size_t>(modality)];
  std::size_t per = static_cast<std::size_t>(p) * p * bands;
  std::vector<double> vals(per * use.size());
  for (std::size_t i = 0; i < use.size(); ++i) {
    int s = use[i];
    if (s < 0 || s >= set.count())
      throw DataError("sample index " + std::to_string(s) + " out of range");
    const double* src = set.patches[static_cast<std::size_t>(modality)].data() + per * s;
    std::copy(src, src + per, vals.begin() + static_cast<std::ptrdiff_t>(per * i));
  }
  return Tensor::constant(Shape{static_cast<int>(use.size()), p, p, bands}, std::move(vals));
}

Tensor centers_tensor(const PatchSet& set, const std::vector<int>& indices) {
  std::vector<int> all = indices.empty() ? all_indices(set.count()) : std::vector<int>{};
  const std::vector<int>& use = indices.empty() ? all : indices;
  int bands = set.band_counts[0];
  std::vector<double> vals(static_cast<std::size_t>(use.size()) * bands);
  for (std::size_t i = 0; i < use.size(); ++i) {
    int s = use[i];
    if (s < 0 || s >= set.count())
      throw DataError("sample index " + std::to_string(s) + " out of range");
    std::copy(set.centers.begin() + static_cast<std::ptrdiff_t>(s) * bands,
              set.centers.begin() + static_cast<std::ptrdiff_t>(s + 1) * bands,
              vals.begin() + static_cast<std::ptrdiff_t>(i) * bands);
  }
  return Tensor::constant(Shape{static_cast<int>(use.size()), bands}, std::move(vals));
}

Tensor labels_one_hot(const std::vector<int>& labels, int classes) {
  std::vector<double> vals(labels.size() * static_cast<std::size_t>(classes), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes)
      throw DataError("class id " + std::to_string(labels[i]) + " outside [0, " +
                      std::to_string(classes) + ")");
    vals[i * classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return Tensor::constant(Shape{static_cast<int>(labels.size()), classes}, std::move(vals));
}

std::vector<int> class_indices(const PatchSet& set, const std::vector<int>& indices) {
  std::vector<int> all = indices.empty() ? all_indices(set.count()) : std::vector<int>{};
  const std::vector<int>& use = indices.empty() ? all : indices;
  std::vector<int> out;
  out.reserve(use.size());
  for (int s : use) {
    if (s < 0 || s >= set.count())
      throw DataError("sample index " + std::to_string(s) + " out of range");
    out.push_back(set.labels[static_cast<std::size_t>(s)] - 1);
  }
  return out;
}

Tensor labels_tensor(const PatchSet& set, int classes, const std::vector<int>& indices) {
  return labels_one_hot(class_indices(set, indices), classes);
}

void save_manifest_csv(const std::string& path, const PatchSet& train, const PatchSet& test) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path);
  out << "row,col,label,split\n";
  auto dump = [&](const PatchSet& set, const char* split) {
    for (int i = 0; i < set.count(); ++i)
      out << set.coords[static_cast<std::size_t>(i)].first << ","
          << set.coords[static_cast<std::size_t>(i)].second << ","
          << set.labels[static_cast<std::size_t>(i)] << "," << split << "\n";
  };
  dump(train, "train");
  dump(test, "test");
}

std::vector<ManifestRow> load_manifest_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path);
  std::string line;
  if (!std::getline(in, line) || line != "row,col,label,split")
    throw DataError("manifest " + path + " missing 'row,col,label,split' header");
  std::vector<ManifestRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestRow row;
    char comma;
    if (!(ss >> row.row >> comma >> row.col >> comma >> row.label >> comma) ||
        !std::getline(ss, row.split))
      throw DataError("malformed manifest line: " + line);
    rows.push_back(row);
  }
  return rows;
}

SynthScene synth_generate(const SyntheticSceneSpec& spec) {
  if (spec.rows < 1 || spec.cols < 1) throw DataError("scene extents must be positive");
  if (spec.classes < 1) throw DataError("scene needs at least one class");
  if (spec.classes > 30) throw DataError("palette limits scenes to 30 classes");
  if (spec.bands.size() != spec.modalities.size() || spec.bands.empty())
    throw DataError("bands and modalities lists must align and be nonempty");
  for (int b : spec.bands)
    if (b < 1) throw DataError("band counts must be positive");
  if (spec.margin <= 0.0) throw DataError("class margin must be positive");
  if (spec.noise_std < 0.0) throw DataError("noise std must be nonnegative");
  if (spec.train_per_class < 1) throw DataError("train quota must be positive");
  if (spec.test_per_class < 0) throw DataError("test quota must be nonnegative");
  for (auto [i, j] : spec.aux_only_pairs) {
    if (i < 0 || j < 0 || i >= spec.classes || j >= spec.classes || i == j)
      throw DataError("auxiliary-only class pair (" + std::to_string(i) + "," +
                      std::to_string(j) + ") invalid for " + std::to_string(spec.classes) +
                      " classes");
    if (spec.modalities.size() < 2)
      throw DataError("auxiliary-only class pairs need a second modality");
  }

  int needed = spec.train_per_class + spec.test_per_class;
  std::size_t pixels = static_cast<std::size_t>(spec.rows) * spec.cols;
  if (static_cast<std::size_t>(needed) * spec.classes > pixels)
    throw DataError("per-class quota " + std::to_string(needed) + " x " +
                    std::to_string(spec.classes) + " classes exceeds scene size " +
                    std::to_string(pixels));

  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<int> row_d(0, spec.rows - 1), col_d(0, spec.cols - 1);

  // Voronoi layout: contiguous class regions; resample seeds until every
  // region can hold its quota.
  std::vector<int> region(pixels);
  std::vector<std::vector<int>> region_pixels;
  bool placed = false;
  for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
    std::vector<std::pair<int, int>> seeds;
    while (static_cast<int>(seeds.size()) < spec.classes) {
      std::pair<int, int> s{row_d(rng), col_d(rng)};
      if (std::find(seeds.begin(), seeds.end(), s) == seeds.end()) seeds.push_back(s);
    }
    region_pixels.assign(static_cast<std::size_t>(spec.classes), {});
    for (int r = 0; r < spec.rows; ++r)
      for (int c = 0; c < spec.cols; ++c) {
        int best = 0;
        long best_d = -1;
        for (int k = 0; k < spec.classes; ++k) {
          long dr = r - seeds[static_cast<std::size_t>(k)].first;
          long dc = c - seeds[static_cast<std::size_t>(k)].second;
          long d = dr * dr + dc * dc;
          if (best_d < 0 || d < best_d) {
            best_d = d;
            best = k;
          }
        }
        region[static_cast<std::size_t>(r) * spec.cols + c] = best;
        region_pixels[static_cast<std::size_t>(best)].push_back(r * spec.cols + c);
      }
    placed = true;
    for (auto& px : region_pixels) placed = placed && static_cast<int>(px.size()) >= needed;
  }
  if (!placed)
    throw DataError("per-class quota " + std::to_string(needed) +
                    " exceeds achievable region size for this scene");

  SynthScene scene;
  scene.curves.resize(spec.bands.size());
  for (std::size_t m = 0; m < spec.bands.size(); ++m) {
    int B = spec.bands[m];
    scene.curves[m].resize(static_cast<std::size_t>(spec.classes) * B);
    for (int k = 0; k < spec.classes; ++k)
      for (int b = 0; b < B; ++b)
        scene.curves[m][static_cast<std::size_t>(k) * B + b] =
            k * (1.5 * spec.margin) +
            (spec.margin / 4.0) * std::sin(2.0 * std::numbers::pi * (b + k) / B);
  }
  for (auto [i, j] : spec.aux_only_pairs) {
    int B = spec.bands[0];
    for (int b = 0; b < B; ++b)
      scene.curves[0][static_cast<std::size_t>(j) * B + b] =
          scene.curves[0][static_cast<std::size_t>(i) * B + b];
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t m = 0; m < spec.bands.size(); ++m) {
    HsiCube cube;
    cube.rows = spec.rows;
    cube.cols = spec.cols;
    cube.bands = spec.bands[m];
    cube.modality = spec.modalities[m];
    cube.values.resize(pixels * static_cast<std::size_t>(cube.bands));
    for (int b = 0; b < cube.bands; ++b)
      for (int r = 0; r < spec.rows; ++r)
        for (int c = 0; c < spec.cols; ++c) {
          int k = region[static_cast<std::size_t>(r) * spec.cols + c];
          double v = scene.curves[m][static_cast<std::size_t>(k) * cube.bands + b];
          if (spec.noise_std > 0.0) v += spec.noise_std * noise(rng);
          cube.at(r, c, b) = static_cast<float>(v);
        }
    scene.cubes.push_back(std::move(cube));
  }

  scene.full_mask.rows = scene.train_mask.rows = scene.test_mask.rows = spec.rows;
  scene.full_mask.cols = scene.train_mask.cols = scene.test_mask.cols = spec.cols;
  scene.full_mask.labels.resize(pixels);
  scene.train_mask.labels.assign(pixels, 0);
  scene.test_mask.labels.assign(pixels, 0);
  for (std::size_t i = 0; i < pixels; ++i)
    scene.full_mask.labels[i] = static_cast<std::uint8_t>(region[i] + 1);
  for (int k = 0; k < spec.classes; ++k) {
    auto& px = region_pixels[static_cast<std::size_t>(k)];
    std::shuffle(px.begin(), px.end(), rng);
    int test_take = spec.test_per_class > 0
                        ? spec.test_per_class
                        : static_cast<int>(px.size()) - spec.train_per_class;
    for (int i = 0; i < spec.train_per_class; ++i)
      scene.train_mask.labels[static_cast<std::size_t>(px[static_cast<std::size_t>(i)])] =
          static_cast<std::uint8_t>(k + 1);
    for (int i = 0; i < test_take; ++i)
      scene.test_mask.labels[static_cast<std::size_t>(
          px[static_cast<std::size_t>(spec.train_per_class + i)])] =
          static_cast<std::uint8_t>(k + 1);
  }
  return scene;
}

PawsAugmentConfig paws_identity_augment() {
  PawsAugmentConfig cfg;
  cfg.channel_swap = cfg.channel_drop = cfg.channel_suppress = cfg.channel_average = false;
  cfg.flip_horizontal = cfg.flip_vertical = cfg.crop = cfg.rotate = false;
  cfg.pixel_removal = cfg.noise = false;
  return cfg;
}

namespace {

// One p x p x B view buffer; every augmentation rewrites it in place.
struct ViewAugmenter {
  int p, bands;
  const PawsAugmentConfig& cfg;
  std::mt19937_64& rng;

  double& at(std::vector<double>& v, int r, int c, int b) const {
    return v[(static_cast<std::size_t>(r) * p + c) * bands + b];
  }
  bool fires() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.probability;
  }
  int pick_band() { return std::uniform_int_distribution<int>(0, bands - 1)(rng); }

  void apply(std::vector<double>& v) {
    if (cfg.channel_swap && fires() && bands > 1) {
      int a = pick_band(), b = pick_band();
      while (b == a) b = pick_band();
      for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c) std::swap(at(v, r, c, a), at(v, r, c, b));
    }
    if (cfg.channel_drop && fires()) {
      int b = pick_band();
      for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c) at(v, r, c, b) = 0.0;
    }
    if (cfg.channel_suppress && fires()) {
      int b = pick_band();
      for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c) at(v, r, c, b) *= cfg.suppress_factor;
    }
    if (cfg.channel_average && fires()) {
      int b = pick_band();
      for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c) {
          double mean = 0.0;
          for (int k = 0; k < bands; ++k) mean += at(v, r, c, k);
          at(v, r, c, b) = mean / bands;
        }
    }
    if (cfg.flip_horizontal && fires()) {
      for (int r = 0; r < p; ++r)
        for (int c = 0; c < p / 2; ++c)
          for (int b = 0; b < bands; ++b) std::swap(at(v, r, c, b), at(v, r, p - 1 - c, b));
    }
    if (cfg.flip_vertical && fires()) {
      for (int r = 0; r < p / 2; ++r)
        for (int c = 0; c < p; ++c)
          for (int b = 0; b < bands; ++b) std::swap(at(v, r, c, b), at(v, p - 1 - r, c, b));
    }
    if (cfg.crop && fires() && p > 2) {
      int q = std::uniform_int_distribution<int>(p - 2, p - 1)(rng);
      int r0 = std::uniform_int_distribution<int>(0, p - q)(rng);
      int c0 = std::uniform_int_distribution<int>(0, p - q)(rng);
      for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c)
          if (r < r0 || r >= r0 + q || c < c0 || c >= c0 + q)
            for (int b = 0; b < bands; ++b) at(v, r, c, b) = 0.0;
    }
    if (cfg.rotate && fires()) {
      static const int angles[3] = {90, 180, 270};
      int angle = angles[std::uniform_int_distribution<int>(0, 2)(rng)];
      std::vector<double> rotated(v.size());
      rotate_plane(angle, p, bands, v.data(), rotated.data());
      v = std::move(rotated);
    }
    if (cfg.pixel_removal && fires()) {
      int removals = std::max(1, p * p / 10);
      for (int i = 0; i < removals; ++i) {
        int r = std::uniform_int_distribution<int>(0, p - 1)(rng);
        int c = std::uniform_int_distribution<int>(0, p - 1)(rng);
        for (int b = 0; b < bands; ++b) at(v, r, c, b) = 0.0;
      }
    }
    if (cfg.noise && fires()) {
      std::normal_distribution<double> n(0.0, cfg.noise_std);
      for (double& x : v) x += n(rng);
    }
  }
};

}  // namespace

ViewPairSet paws_view_pairs(const HsiCube& cube, int p, double overlap_fraction, int count,
                            const PawsAugmentConfig& aug, std::uint64_t seed) {
  if (p < 1) throw DataError("view patch size must be positive");
  if (overlap_fraction <= 0.0 || overlap_fraction >= 1.0)
    throw DataError("overlap fraction must lie strictly between 0 and 1");
  if (count < 1) throw DataError("view pair count must be positive");
  if (p > cube.rows || p > cube.cols)
    throw DataError("view overlap infeasible: patch size " + std::to_string(p) +
                    " exceeds image extents " + std::to_string(cube.rows) + "x" +
                    std::to_string(cube.cols));
  int needed = static_cast<int>(std::ceil(overlap_fraction * p * p));

  ViewPairSet out;
  out.p = p;
  out.bands = cube.bands;
  out.count = count;
  std::size_t per = static_cast<std::size_t>(p) * p * cube.bands;
  out.anchors.reserve(per * static_cast<std::size_t>(count));
  out.positives.reserve(per * static_cast<std::size_t>(count));

  // Geometry and augmentation use separate streams so the sampled windows
  // are a function of (seed, p, fraction) alone, regardless of augmentation
  // configuration.
  std::mt19937_64 rng(seed);
  std::mt19937_64 aug_rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_int_distribution<int> r_d(0, cube.rows - p), c_d(0, cube.cols - p);
  std::uniform_int_distribution<int> off_d(-(p - 1), p - 1);
  ViewAugmenter augmenter{p, cube.bands, aug, aug_rng};

  auto copy_window = [&](int r0, int c0, std::vector<double>& dst) {
    dst.resize(per);
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < p; ++c)
        for (int b = 0; b < cube.bands; ++b)
          dst[(static_cast<std::size_t>(r) * p + c) * cube.bands + b] =
              static_cast<double>(cube.at(r0 + r, c0 + c, b));
  };

  for (int i = 0; i < count; ++i) {
    int ar = r_d(rng), ac = c_d(rng);
    int pr = ar, pc = ac;
    for (int attempt = 0; attempt < 1024; ++attempt) {
      int dr = off_d(rng), dc = off_d(rng);
      int cand_r = ar + dr, cand_c = ac + dc;
      if (cand_r < 0 || cand_c < 0 || cand_r > cube.rows - p || cand_c > cube.cols - p) continue;
      if ((p - std::abs(dr)) * (p - std::abs(dc)) < needed) continue;
      pr = cand_r;
      pc = cand_c;
      break;
    }
    std::vector<double> anchor, positive;
    copy_window(ar, ac, anchor);
    copy_window(pr, pc, positive);
    augmenter.apply(anchor);
    augmenter.apply(positive);
    out.anchors.insert(out.anchors.end(), anchor.begin(), anchor.end());
    out.positives.insert(out.positives.end(), positive.begin(), positive.end());
    out.anchor_coords.emplace_back(ar, ac);
    out.positive_coords.emplace_back(pr, pc);
  }
  return out;
}

}  // namespace hsc
