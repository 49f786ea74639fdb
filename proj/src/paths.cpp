#include "mkvb/paths.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "mkvb/error.hpp"

namespace mkvb {

namespace {

constexpr double kTimeTol = 1e-12;

bool in_grid(const std::vector<double>& grid, double t) {
  return std::binary_search(grid.begin(), grid.end(), t);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Position at u with ancestor delegation for u before the birth.
void lineage_position(std::span<const ParticleRecord> records, std::size_t index, std::size_t dim,
                      double u, std::span<double> out) {
  std::size_t r = index;
  while (u < records[r].birth && records[r].parent_index != kNoParent) {
    r = records[r].parent_index;
  }
  record_position(records[r], dim, u, out);
}

}  // namespace

void sort_records(std::vector<ParticleRecord>& records) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return records[a].label < records[b].label; });
  std::vector<std::size_t> new_index(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) new_index[order[i]] = i;
  std::vector<ParticleRecord> sorted;
  sorted.reserve(records.size());
  for (auto idx : order) {
    sorted.push_back(std::move(records[idx]));
    auto& r = sorted.back();
    if (r.parent_index != kNoParent) {
      if (r.parent_index >= new_index.size()) throw InvalidArgument("parent index out of range");
      r.parent_index = new_index[r.parent_index];
    }
  }
  records = std::move(sorted);
}

void record_position(const ParticleRecord& record, std::size_t dim, double u,
                     std::span<double> out) {
  const auto& ts = record.times;
  if (ts.empty()) throw InvalidArgument("record " + record.label.to_string() + " has no samples");
  const double* pos = record.positions.data();
  if (u <= ts.front()) {
    std::copy_n(pos, dim, out.begin());
    return;
  }
  if (u >= ts.back()) {
    std::copy_n(pos + (ts.size() - 1) * dim, dim, out.begin());
    return;
  }
  auto hi = static_cast<std::size_t>(std::upper_bound(ts.begin(), ts.end(), u) - ts.begin());
  auto lo = hi - 1;
  const double w = (u - ts[lo]) / (ts[hi] - ts[lo]);
  for (std::size_t c = 0; c < dim; ++c) {
    const double a = pos[lo * dim + c];
    const double b = pos[hi * dim + c];
    out[c] = a + w * (b - a);
  }
}

void ParticleView::position_at(double u, std::span<double> out) const {
  const double v = std::min(u, t_);
  const auto& rec = records_[index_];
  if (v < rec.birth) {
    lineage_position(records_, index_, dim_, v, out);
    return;
  }
  const double last = rec.times.empty() ? rec.birth : rec.times.back();
  if (v <= last && !rec.times.empty()) {
    record_position(rec, dim_, v, out);
    return;
  }
  // Between the last stored sample and the view time: linear towards x_t.
  if (rec.times.empty() || t_ <= last) {
    std::copy(current_.begin(), current_.end(), out.begin());
    return;
  }
  const double* base = rec.positions.data() + (rec.times.size() - 1) * dim_;
  const double w = (v - last) / (t_ - last);
  for (std::size_t c = 0; c < dim_; ++c) out[c] = base[c] + w * (current_[c] - base[c]);
}

TreePath::TreePath(std::size_t dim, double horizon, std::vector<double> grid,
                   std::vector<ParticleRecord> records) {
  sort_records(records);
  data_ = std::make_shared<const Data>(Data{dim, horizon, std::move(grid), std::move(records)});
  validate();
}

TreePath::TreePath(Trusted, std::size_t dim, double horizon, std::vector<double> grid,
                   std::vector<ParticleRecord> records)
    : data_(std::make_shared<const Data>(
          Data{dim, horizon, std::move(grid), std::move(records)})) {}

std::optional<std::size_t> TreePath::find(const Label& k) const {
  const auto& recs = data_->records;
  auto it = std::lower_bound(recs.begin(), recs.end(), k,
                             [](const ParticleRecord& r, const Label& key) { return r.label < key; });
  if (it == recs.end() || it->label != k) return std::nullopt;
  return static_cast<std::size_t>(it - recs.begin());
}

std::optional<Label> TreePath::parent_label(std::size_t i) const {
  const auto& r = data_->records.at(i);
  if (r.is_initial()) return std::nullopt;
  return data_->records[r.parent_index].label;
}

void TreePath::validate() const {
  const auto& d = *data_;
  if (d.dim == 0) throw InvalidArgument("dimension must be >= 1");
  if (!(d.horizon > 0.0)) throw InvalidArgument("horizon must be positive");
  if (d.grid.size() < 2 || d.grid.front() != 0.0 || d.grid.back() != d.horizon) {
    throw InvalidArgument("grid must run from 0 to the horizon");
  }
  for (std::size_t i = 1; i < d.grid.size(); ++i) {
    if (!(d.grid[i] > d.grid[i - 1])) throw InvalidArgument("grid must be strictly increasing");
  }
  std::vector<std::uint32_t> children(d.records.size(), 0);
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto& r = d.records[i];
    const std::string name = r.label.to_string();
    if (i > 0 && !(d.records[i - 1].label < r.label)) {
      throw InvalidArgument("records not sorted or duplicated at " + name);
    }
    if (r.death.has_value() != r.offspring.has_value()) {
      throw InvalidArgument("record " + name + ": offspring count set iff dead");
    }
    if (r.death && !(r.birth < *r.death && *r.death <= d.horizon)) {
      throw InvalidArgument("record " + name + ": need birth < death <= T");
    }
    if (!in_grid(d.grid, r.birth) || (r.death && !in_grid(d.grid, *r.death))) {
      throw InvalidArgument("record " + name + ": event time missing from grid");
    }
    if (r.times.empty() || r.times.front() != r.birth) {
      throw InvalidArgument("record " + name + ": first sample must be at birth");
    }
    if (r.positions.size() != r.times.size() * d.dim) {
      throw InvalidArgument("record " + name + ": position storage mismatch");
    }
    for (std::size_t s = 0; s < r.times.size(); ++s) {
      if (s > 0 && !(r.times[s] > r.times[s - 1])) {
        throw InvalidArgument("record " + name + ": sample times not increasing");
      }
      if (!in_grid(d.grid, r.times[s])) {
        throw InvalidArgument("record " + name + ": sample time off the grid");
      }
    }
    if (r.death && r.times.back() != *r.death) {
      throw InvalidArgument("record " + name + ": last sample must be at death");
    }
    if (r.is_initial()) {
      if (r.birth != 0.0) throw InvalidArgument("initial record " + name + " not born at 0");
      continue;
    }
    if (r.parent_index >= d.records.size()) throw InvalidArgument("record " + name + ": bad parent");
    const auto& p = d.records[r.parent_index];
    if (r.label.is_root() || parent(r.label) != p.label) {
      throw InvalidArgument("record " + name + ": label is not a child of its parent");
    }
    if (!p.death || *p.death != r.birth) {
      throw InvalidArgument("record " + name + ": parent did not die at the birth time");
    }
    if (r.label.back() > *p.offspring) {
      throw InvalidArgument("record " + name + ": exceeds parent offspring count");
    }
    const double* first = r.positions.data();
    const double* pdeath = p.positions.data() + (p.times.size() - 1) * d.dim;
    if (!std::equal(first, first + d.dim, pdeath)) {
      throw InvalidArgument("record " + name + ": does not start at the parent's death position");
    }
    ++children[r.parent_index];
  }
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto& r = d.records[i];
    if (r.offspring && children[i] != *r.offspring) {
      throw InvalidArgument("record " + r.label.to_string() + ": offspring labels incomplete");
    }
  }
}

ParticleConfiguration TreePath::configuration_at(double t) const {
  const auto& d = *data_;
  if (!(t >= 0.0 && t <= d.horizon)) throw InvalidArgument("time outside [0, T]");
  ParticleConfiguration out(d.dim);
  std::vector<double> x(d.dim);
  for (const auto& r : d.records) {
    if (!r.alive_at(t)) continue;
    record_position(r, d.dim, t, x);
    out.push_back_unchecked(r.label, x);
  }
  return out;
}

ParticleConfiguration TreePath::left_limit_at(double t) const {
  const auto& d = *data_;
  if (!(t >= 0.0 && t <= d.horizon)) throw InvalidArgument("time outside [0, T]");
  if (t == 0.0) return configuration_at(0.0);
  ParticleConfiguration out(d.dim);
  std::vector<double> x(d.dim);
  for (const auto& r : d.records) {
    if (!r.alive_before(t)) continue;
    record_position(r, d.dim, t, x);
    out.push_back_unchecked(r.label, x);
  }
  return out;
}

std::size_t TreePath::count_at(double t) const {
  std::size_t n = 0;
  for (const auto& r : data_->records) n += r.alive_at(t) ? 1 : 0;
  return n;
}

ParticleView TreePath::view(std::size_t i, double t, std::vector<double>& scratch) const {
  scratch.resize(data_->dim);
  lineage_position(data_->records, i, data_->dim, t, scratch);
  return ParticleView(data_->records, i, data_->dim, t, scratch);
}

std::vector<double> TreePath::event_times() const {
  std::vector<double> out;
  for (const auto& r : data_->records) {
    if (r.birth > 0.0) out.push_back(r.birth);
    if (r.death) out.push_back(*r.death);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

TreePath stop(const TreePath& p, double t) {
  if (!(t >= 0.0 && t <= p.horizon())) throw InvalidArgument("stop time outside [0, T]");
  if (t == p.horizon()) return p;
  const std::size_t dim = p.dim();
  std::vector<ParticleRecord> out;
  std::vector<std::size_t> remap(p.record_count(), kNoParent);
  for (std::size_t i = 0; i < p.record_count(); ++i) {
    const auto& r = p.record(i);
    if (r.birth > t) continue;
    remap[i] = out.size();
    ParticleRecord c = r;
    if (!(r.death && *r.death <= t)) {
      std::vector<double> xt(dim);
      record_position(r, dim, t, xt);
      c.death.reset();
      c.offspring.reset();
      std::size_t keep = static_cast<std::size_t>(
          std::upper_bound(r.times.begin(), r.times.end(), t) - r.times.begin());
      c.times.resize(keep);
      c.positions.resize(keep * dim);
      if (c.times.empty() || c.times.back() < t) {
        c.times.push_back(t);
        c.positions.insert(c.positions.end(), xt.begin(), xt.end());
      }
    }
    out.push_back(std::move(c));
  }
  for (auto& r : out) {
    if (r.parent_index != kNoParent) r.parent_index = remap[r.parent_index];
  }
  std::vector<double> grid;
  for (double g : p.grid()) {
    if (g <= t) grid.push_back(g);
  }
  if (grid.back() < t) grid.push_back(t);
  grid.push_back(p.horizon());
  // Record order is inherited from p, already label-sorted.
  return TreePath(TreePath::Trusted{}, dim, p.horizon(), std::move(grid), std::move(out));
}

PathSnapshot::PathSnapshot(const TreePath& p, double stop_time)
    : path_(p), dim_(p.dim()), horizon_(p.horizon()), stop_(std::clamp(stop_time, 0.0, p.horizon())) {
  for (double g : p.grid()) {
    if (g <= stop_) knots_.push_back(g);
  }
  if (knots_.empty() || knots_.back() < stop_) knots_.push_back(stop_);
  const auto recs = p.records();
  std::vector<double> x(dim_);
  offset_.reserve(knots_.size() + 1);
  for (std::size_t j = 0; j < knots_.size(); ++j) {
    offset_.push_back(ids_.size());
    const double a = knots_[j];
    const bool last = j + 1 == knots_.size();
    const double b = last ? a : knots_[j + 1];
    for (std::size_t r = 0; r < recs.size(); ++r) {
      if (!recs[r].alive_at(a)) continue;
      ids_.push_back(static_cast<std::uint32_t>(r));
      record_position(recs[r], dim_, a, x);
      start_.insert(start_.end(), x.begin(), x.end());
      record_position(recs[r], dim_, b, x);
      end_.insert(end_.end(), x.begin(), x.end());
    }
  }
  offset_.push_back(ids_.size());
}

void PathSnapshot::interpolate(std::size_t j, double u, Eval& out) const {
  const auto recs = path_.records();
  const std::size_t lo = offset_[j];
  const std::size_t hi = offset_[j + 1];
  out.labels.clear();
  out.coords.clear();
  const bool point = j + 1 >= knots_.size();
  const double w = point ? 0.0 : (u - knots_[j]) / (knots_[j + 1] - knots_[j]);
  for (std::size_t i = lo; i < hi; ++i) {
    out.labels.push_back(&recs[ids_[i]].label);
    for (std::size_t c = 0; c < dim_; ++c) {
      const double a = start_[i * dim_ + c];
      const double b = end_[i * dim_ + c];
      out.coords.push_back(w == 0.0 ? a : a + w * (b - a));
    }
  }
}

void PathSnapshot::right(double u, Eval& out) const {
  if (u >= stop_) {
    interpolate(knots_.size() - 1, stop_, out);
    return;
  }
  auto j = static_cast<std::size_t>(std::upper_bound(knots_.begin(), knots_.end(), u) - knots_.begin()) - 1;
  interpolate(j, u, out);
}

void PathSnapshot::left(double u, Eval& out) const {
  if (u > stop_ || u <= 0.0) {
    right(u, out);
    return;
  }
  auto j = static_cast<std::size_t>(std::lower_bound(knots_.begin(), knots_.end(), u) - knots_.begin()) - 1;
  interpolate(j, u, out);
}

double eval_distance(const PathSnapshot::Eval& a, const PathSnapshot::Eval& b, std::size_t dim) {
  double shared = 0.0;
  std::size_t unmatched = 0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.labels.size() && j < b.labels.size()) {
    const Label* la = a.labels[i];
    const Label* lb = b.labels[j];
    auto order = (la == lb) ? std::strong_ordering::equal : (*la <=> *lb);
    if (order < 0) {
      ++unmatched;
      ++i;
    } else if (order > 0) {
      ++unmatched;
      ++j;
    } else {
      double sq = 0.0;
      for (std::size_t c = 0; c < dim; ++c) {
        const double diff = a.coords[i * dim + c] - b.coords[j * dim + c];
        sq += diff * diff;
      }
      shared += std::min(std::sqrt(sq), 1.0);
      ++i;
      ++j;
    }
  }
  unmatched += (a.labels.size() - i) + (b.labels.size() - j);
  return shared + static_cast<double>(unmatched);
}

double snapshot_distance(const PathSnapshot& a, const PathSnapshot& b) {
  if (a.dim() != b.dim()) throw InvalidArgument("path dimension mismatch");
  if (std::abs(a.horizon() - b.horizon()) > kTimeTol) throw InvalidArgument("path horizon mismatch");
  std::vector<double> knots;
  knots.reserve(a.knots().size() + b.knots().size());
  std::merge(a.knots().begin(), a.knots().end(), b.knots().begin(), b.knots().end(),
             std::back_inserter(knots));
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
  thread_local PathSnapshot::Eval ea, eb;
  double best = 0.0;
  for (double u : knots) {
    a.right(u, ea);
    b.right(u, eb);
    best = std::max(best, eval_distance(ea, eb, a.dim()));
    if (u > 0.0) {
      a.left(u, ea);
      b.left(u, eb);
      best = std::max(best, eval_distance(ea, eb, a.dim()));
    }
  }
  return best;
}

double path_distance(const TreePath& p1, const TreePath& p2) {
  if (p1.dim() != p2.dim()) throw InvalidArgument("path dimension mismatch");
  if (std::abs(p1.horizon() - p2.horizon()) > kTimeTol) throw InvalidArgument("path horizon mismatch");
  return snapshot_distance(PathSnapshot(p1, p1.horizon()), PathSnapshot(p2, p2.horizon()));
}

double path_distance_t(const TreePath& p1, const TreePath& p2, double t) {
  if (p1.dim() != p2.dim()) throw InvalidArgument("path dimension mismatch");
  if (std::abs(p1.horizon() - p2.horizon()) > kTimeTol) throw InvalidArgument("path horizon mismatch");
  if (!(t >= 0.0 && t <= p1.horizon())) throw InvalidArgument("time outside [0, T]");
  return snapshot_distance(PathSnapshot(p1, t), PathSnapshot(p2, t));
}

std::size_t sup_population(const TreePath& p) {
  std::size_t best = p.count_at(0.0);
  for (double t : p.event_times()) best = std::max(best, p.count_at(t));
  return best;
}

std::size_t total_ever_alive(const TreePath& p) noexcept { return p.record_count(); }

void write_records_csv(std::ostream& os, const TreePath& p) {
  os << "label,parent,birth,death,offspring_count\n";
  for (std::size_t i = 0; i < p.record_count(); ++i) {
    const auto& r = p.record(i);
    os << r.label.to_string() << ',';
    if (!r.is_initial()) os << p.record(r.parent_index).label.to_string();
    os << ',' << format_real(r.birth) << ',';
    if (r.death) os << format_real(*r.death);
    os << ',';
    if (r.offspring) os << *r.offspring;
    os << '\n';
  }
}

void write_trajectory_csv(std::ostream& os, const TreePath& p) {
  os << "label,time";
  for (std::size_t c = 0; c < p.dim(); ++c) os << ",x_" << (c + 1);
  os << '\n';
  for (const auto& r : p.records()) {
    const std::string name = r.label.to_string();
    for (std::size_t s = 0; s < r.times.size(); ++s) {
      os << name << ',' << format_real(r.times[s]);
      for (std::size_t c = 0; c < p.dim(); ++c) os << ',' << format_real(r.positions[s * p.dim() + c]);
      os << '\n';
    }
  }
}

TreePath read_tree_csv(std::istream& records, std::istream& trajectory, double horizon) {
  std::string line;
  if (!std::getline(records, line) || line != "label,parent,birth,death,offspring_count") {
    throw InvalidArgument("records.csv header mismatch");
  }
  std::vector<ParticleRecord> recs;
  std::vector<std::optional<Label>> parents;
  std::map<Label, std::size_t> index;
  while (std::getline(records, line)) {
    if (line.empty()) continue;
    auto cells = split_csv(line);
    if (cells.size() != 5) throw InvalidArgument("records.csv row has wrong arity");
    ParticleRecord r;
    r.label = Label::parse(cells[0]);
    parents.push_back(cells[1].empty() ? std::nullopt : std::optional<Label>(Label::parse(cells[1])));
    r.birth = std::stod(cells[2]);
    if (!cells[3].empty()) r.death = std::stod(cells[3]);
    if (!cells[4].empty()) r.offspring = static_cast<std::uint32_t>(std::stoul(cells[4]));
    if (!index.emplace(r.label, recs.size()).second) {
      throw InvalidArgument("duplicate label in records.csv");
    }
    recs.push_back(std::move(r));
  }
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (!parents[i]) continue;
    auto it = index.find(*parents[i]);
    if (it == index.end()) throw InvalidArgument("unknown parent " + parents[i]->to_string());
    recs[i].parent_index = it->second;
  }
  if (!std::getline(trajectory, line)) throw InvalidArgument("traj.csv is empty");
  auto header = split_csv(line);
  if (header.size() < 3 || header[0] != "label" || header[1] != "time") {
    throw InvalidArgument("traj.csv header mismatch");
  }
  const std::size_t dim = header.size() - 2;
  std::vector<double> grid{0.0, horizon};
  while (std::getline(trajectory, line)) {
    if (line.empty()) continue;
    auto cells = split_csv(line);
    if (cells.size() != dim + 2) throw InvalidArgument("traj.csv row has wrong arity");
    auto it = index.find(Label::parse(cells[0]));
    if (it == index.end()) throw InvalidArgument("trajectory for unknown label " + cells[0]);
    auto& r = recs[it->second];
    r.times.push_back(std::stod(cells[1]));
    grid.push_back(r.times.back());
    for (std::size_t c = 0; c < dim; ++c) r.positions.push_back(std::stod(cells[2 + c]));
  }
  for (const auto& r : recs) {
    grid.push_back(r.birth);
    if (r.death) grid.push_back(*r.death);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return TreePath(dim, horizon, std::move(grid), std::move(recs));
}

}  // namespace mkvb
