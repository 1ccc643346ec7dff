#include "amx/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include "amx/error.hpp"
#include "amx/io/csv.hpp"
#include "amx/rng.hpp"

namespace amx {

bool maximization_success(std::size_t original_argmax, std::size_t separate_argmax, std::size_t target) {
  return original_argmax == target && separate_argmax == target;
}

bool maximization_success(const ClassifierModel& original, const ClassifierModel& separate, const FeatureGrid& x,
                          std::size_t target) {
  if (original.num_classes != separate.num_classes) {
    throw ContractError("maximization_success: classifiers disagree on K (" + std::to_string(original.num_classes) +
                        " vs " + std::to_string(separate.num_classes) + ")");
  }
  return maximization_success(classifier_forward(original, x).argmax(), classifier_forward(separate, x).argmax(),
                              target);
}

double TransferGrid::mean_diagonal() const {
  if (rates.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < rates.size(); ++i) s += rates[i][i];
  return s / double(rates.size());
}

TransferGrid transfer_grid(std::span<const Prediction> predictions, std::vector<std::string> class_names) {
  const std::size_t K = class_names.size();
  if (K == 0) throw ContractError("transfer_grid: no classes");
  TransferGrid grid;
  grid.class_names = std::move(class_names);
  grid.counts.assign(K, std::vector<std::size_t>(K, 0));
  for (const auto& p : predictions) {
    if (p.target >= K || p.predicted >= K) {
      throw IndexError("transfer_grid: class index out of range for K=" + std::to_string(K));
    }
    ++grid.counts[p.target][p.predicted];
  }
  grid.rates.assign(K, std::vector<double>(K, 0.0));
  for (std::size_t r = 0; r < K; ++r) {
    const std::size_t total = std::accumulate(grid.counts[r].begin(), grid.counts[r].end(), std::size_t{0});
    if (total == 0) throw EvaluationError("transfer_grid: no samples for class '" + grid.class_names[r] + "'");
    for (std::size_t c = 0; c < K; ++c) grid.rates[r][c] = double(grid.counts[r][c]) / double(total);
  }
  return grid;
}

TransferGrid transfer_grid(const ClassifierModel& separate, std::span<const MaximizationResult> samples,
                           std::vector<std::string> class_names) {
  if (class_names.size() != separate.num_classes) {
    throw ContractError("transfer_grid: " + std::to_string(class_names.size()) + " class names for K=" +
                        std::to_string(separate.num_classes));
  }
  std::vector<Prediction> preds(samples.size());
  std::vector<std::exception_ptr> errors(samples.size());
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      preds[i] = {samples[i].target, classifier_forward(separate, samples[i].maximized).argmax()};
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return transfer_grid(preds, std::move(class_names));
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_transfer_csv(const TransferGrid& grid, const std::filesystem::path& path) {
  auto out = io::open_output(path);
  out << "target";
  for (const auto& name : grid.class_names) out << ',' << csv_field(name);
  out << '\n';
  for (std::size_t r = 0; r < grid.size(); ++r) {
    out << csv_field(grid.class_names[r]);
    for (double v : grid.rates[r]) out << ',' << io::format_number(v, 17);
    out << '\n';
  }
  if (!out) throw Error("transfer grid: write failed for " + path.string());
}

void write_transfer_svg(const TransferGrid& grid, const std::filesystem::path& path, const std::string& title) {
  const int cell = 36, left = 90, top = 70;
  const int K = static_cast<int>(grid.size());
  auto out = io::open_output(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + K * cell + 20 << "\" height=\""
      << top + K * cell + 40 << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << left << "\" y=\"18\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
  for (int r = 0; r < K; ++r) {
    out << "<text x=\"" << left - 6 << "\" y=\"" << top + r * cell + cell / 2 + 4 << "\" text-anchor=\"end\">"
        << xml_escape(grid.class_names[r]) << "</text>\n";
    out << "<text transform=\"translate(" << left + r * cell + cell / 2 + 4 << "," << top - 6
        << ") rotate(-60)\">" << xml_escape(grid.class_names[r]) << "</text>\n";
    for (int c = 0; c < K; ++c) {
      const int level = static_cast<int>(std::lround(255.0 * (1.0 - grid.rates[r][c])));
      out << "<rect x=\"" << left + c * cell << "\" y=\"" << top + r * cell << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"rgb(" << level << ',' << level << ',' << level
          << ")\" stroke=\"#ccc\"><title>" << xml_escape(grid.class_names[r]) << " -> "
          << xml_escape(grid.class_names[c]) << ": " << io::format_number(grid.rates[r][c], 4)
          << "</title></rect>\n";
    }
  }
  out << "<text x=\"" << left << "\" y=\"" << top + K * cell + 24
      << "\">rows: maximization target, columns: separate classifier</text>\n";
  out << "</svg>\n";
}

namespace {

std::vector<double> squared_distances(std::span<const std::vector<double>> x) {
  const std::size_t n = x.size();
  std::vector<double> d(n * n, 0.0);
  const auto sn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < sn; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (std::size_t(i) == j) continue;
      double s = 0.0;
      for (std::size_t k = 0; k < x[i].size(); ++k) {
        const double t = x[i][k] - x[j][k];
        s += t * t;
      }
      d[std::size_t(i) * n + j] = s;
    }
  }
  return d;
}

void check_points(std::span<const std::vector<double>> points, double perplexity) {
  if (!(perplexity > 0.0)) throw ContractError("tsne: perplexity must be > 0");
  if (double(points.size()) < 3.0 * perplexity) {
    throw ContractError("tsne: " + std::to_string(points.size()) + " points, need at least 3 x perplexity = " +
                        io::format_number(3.0 * perplexity, 6));
  }
  for (const auto& p : points) {
    if (p.size() != points[0].size()) throw DimensionError("tsne: points differ in dimension");
    for (double v : p) {
      if (!std::isfinite(v)) throw NumericError("tsne: non-finite input coordinate");
    }
  }
}

}  // namespace

std::vector<double> conditional_p(std::span<const std::vector<double>> points, double perplexity, double tolerance) {
  check_points(points, perplexity);
  const std::size_t n = points.size();
  const auto d = squared_distances(points);
  std::vector<double> p(n * n, 0.0);
  const double log_target = std::log(perplexity);
  const auto sn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t si = 0; si < sn; ++si) {
    const std::size_t i = std::size_t(si);
    const double* di = d.data() + i * n;
    double* pi = p.data() + i * n;
    double dmin = INFINITY, dsum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      dmin = std::min(dmin, di[j]);
      dsum += di[j];
    }
    const double spread = dsum / double(n - 1) - dmin;
    double beta = spread > 0.0 ? 1.0 / spread : 1.0;
    double lo = 0.0, hi = INFINITY;
    for (int iter = 0; iter < 200; ++iter) {
      double sum = 0.0, weighted = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double shifted = di[j] - dmin;
        pi[j] = std::exp(-beta * shifted);
        sum += pi[j];
        weighted += shifted * pi[j];
      }
      const double h = std::log(sum) + beta * weighted / sum;
      if (std::abs(std::exp(h) - perplexity) < tolerance) break;
      if (h > log_target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += pi[j];
    for (std::size_t j = 0; j < n; ++j) pi[j] /= sum;
  }
  return p;
}

TsneResult tsne(std::span<const std::vector<double>> points, const TsneConfig& cfg) {
  if (cfg.iterations < 1) throw ContractError("tsne: iterations must be >= 1");
  const auto cond = conditional_p(points, cfg.perplexity, cfg.perplexity_tolerance);
  const std::size_t n = points.size();
  const auto sn = static_cast<std::ptrdiff_t>(n);

  std::vector<double> P(n * n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = i == j ? 0.0 : std::max((cond[i * n + j] + cond[j * n + i]) / (2.0 * double(n)), 1e-12);
      P[i * n + j] = v;
      total += v;
    }
  }
  for (auto& v : P) v /= total;

  Rng rng(cfg.seed);
  std::vector<double> Y(2 * n), iY(2 * n, 0.0), gains(2 * n, 1.0), dY(2 * n);
  for (auto& v : Y) v = rng.normal() * cfg.init_sigma;

  std::vector<double> num(n * n), row_sum(n), row_kl(n);
  TsneResult result;
  result.kl.reserve(cfg.iterations);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const bool early = it < cfg.exaggeration_iters;
    const double exaggeration = early ? cfg.early_exaggeration : 1.0;
    const double momentum = early ? cfg.initial_momentum : cfg.final_momentum;
    if (it == cfg.exaggeration_iters) {
      // Fresh optimizer state for the second phase.
      std::fill(iY.begin(), iY.end(), 0.0);
      std::fill(gains.begin(), gains.end(), 1.0);
    }

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t si = 0; si < sn; ++si) {
      const std::size_t i = std::size_t(si);
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double q = 0.0;
        if (j != i) {
          const double dx = Y[2 * i] - Y[2 * j], dy = Y[2 * i + 1] - Y[2 * j + 1];
          q = 1.0 / (1.0 + dx * dx + dy * dy);
        }
        num[i * n + j] = q;
        s += q;
      }
      row_sum[i] = s;
    }
    double z = 0.0;
    for (double s : row_sum) z += s;

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t si = 0; si < sn; ++si) {
      const std::size_t i = std::size_t(si);
      double gx = 0.0, gy = 0.0, kl = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double nij = num[i * n + j];
        const double q = nij / z;
        const double pij = P[i * n + j];
        const double m = (exaggeration * pij - q) * nij;
        gx += m * (Y[2 * i] - Y[2 * j]);
        gy += m * (Y[2 * i + 1] - Y[2 * j + 1]);
        kl += pij * std::log(pij / q);
      }
      dY[2 * i] = 4.0 * gx;
      dY[2 * i + 1] = 4.0 * gy;
      row_kl[i] = kl;
    }
    double kl = 0.0;
    for (double v : row_kl) kl += v;
    result.kl.push_back(kl);

    for (std::size_t k = 0; k < 2 * n; ++k) {
      gains[k] = (dY[k] > 0.0) != (iY[k] > 0.0) ? gains[k] + 0.2 : gains[k] * 0.8;
      gains[k] = std::max(gains[k], 0.01);
      iY[k] = momentum * iY[k] - cfg.learning_rate * gains[k] * dY[k];
      Y[k] += iY[k];
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += Y[2 * i];
      my += Y[2 * i + 1];
    }
    mx /= double(n);
    my /= double(n);
    for (std::size_t i = 0; i < n; ++i) {
      Y[2 * i] -= mx;
      Y[2 * i + 1] -= my;
    }
  }
  for (double v : Y) {
    if (!std::isfinite(v)) throw NumericError("tsne: embedding diverged");
  }
  result.coords.resize(n);
  for (std::size_t i = 0; i < n; ++i) result.coords[i] = {Y[2 * i], Y[2 * i + 1]};
  return result;
}

double LatentShiftReport::mean_displacement(bool misclassified) const {
  double s = 0.0;
  std::size_t c = 0;
  for (const auto& r : rows) {
    if (r.misclassified != misclassified) continue;
    s += r.displacement;
    ++c;
  }
  return c ? s / double(c) : 0.0;
}

std::size_t LatentShiftReport::count(bool misclassified) const {
  return std::size_t(std::count_if(rows.begin(), rows.end(),
                                   [&](const ShiftRow& r) { return r.misclassified == misclassified; }));
}

LatentShiftReport latent_shift_report(const AutoencoderModel& ae, const ClassifierModel& clf,
                                      std::span<const LabeledExample> examples,
                                      const std::vector<std::string>& class_names, const ShiftConfig& cfg) {
  if (examples.empty()) throw EvaluationError("latent_shift_report: no examples");
  if (class_names.size() != clf.num_classes) {
    throw ContractError("latent_shift_report: " + std::to_string(class_names.size()) + " class names for K=" +
                        std::to_string(clf.num_classes));
  }
  const std::size_t n = examples.size();
  std::vector<MaximizationResult> results(n);
  std::vector<char> wrong(n, 0);
  std::vector<std::exception_ptr> errors(n);
  const MaxModels models{&clf, &ae};
  const auto sn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < sn; ++i) {
    try {
      wrong[i] = classifier_forward(clf, examples[i].features, cfg.max.precision).argmax() != examples[i].label;
      results[i] = class_to_class(MaxMode::kLatent, models, examples[i], cfg.max);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  LatentShiftReport report;
  std::vector<std::vector<double>> latents;
  latents.reserve(2 * n);
  for (const auto& r : results) latents.push_back(r.start_latent->values);
  for (const auto& r : results) latents.push_back(r.final_latent->values);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < latents[i].size(); ++k) {
      const double d = latents[n + i][k] - latents[i][k];
      s += d * d;
    }
    report.rows.push_back({i, class_names[examples[i].label], examples[i].speaker_id, wrong[i] != 0, std::sqrt(s),
                           results[i].iterations_used, results[i].reached_stop});
  }
  const auto embedded = tsne(latents, cfg.tsne);
  report.kl = embedded.kl;
  for (std::size_t k = 0; k < 2 * n; ++k) {
    const std::size_t i = k % n;
    report.points.push_back({embedded.coords[k][0], embedded.coords[k][1], class_names[examples[i].label],
                             examples[i].speaker_id, k < n ? "before" : "after", wrong[i] != 0});
  }
  return report;
}

void write_embeddings_csv(std::span<const EmbeddingPoint> points, const std::filesystem::path& path) {
  auto out = io::open_output(path);
  out << "x,y,command,speaker,phase,misclassified\n";
  for (const auto& p : points) {
    out << io::format_number(p.x, 17) << ',' << io::format_number(p.y, 17) << ',' << csv_field(p.command) << ','
        << csv_field(p.speaker) << ',' << p.phase << ',' << (p.misclassified ? 1 : 0) << '\n';
  }
  if (!out) throw Error("embeddings: write failed for " + path.string());
}

void write_embeddings_svg(std::span<const EmbeddingPoint> points, const std::filesystem::path& path,
                          const std::string& title) {
  const double size = 640.0, margin = 30.0;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  std::vector<std::string> commands;
  for (const auto& p : points) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
    if (std::find(commands.begin(), commands.end(), p.command) == commands.end()) commands.push_back(p.command);
  }
  std::sort(commands.begin(), commands.end());
  const double span = std::max({xmax - xmin, ymax - ymin, 1e-12});
  auto sx = [&](double x) { return margin + (x - xmin) / span * (size - 2 * margin); };
  auto sy = [&](double y) { return size - margin - (y - ymin) / span * (size - 2 * margin); };
  auto color = [&](const std::string& c) {
    const auto idx = std::size_t(std::find(commands.begin(), commands.end(), c) - commands.begin());
    const int hue = static_cast<int>((idx * 360) / std::max<std::size_t>(commands.size(), 1));
    return "hsl(" + std::to_string(hue) + ",70%,45%)";
  };

  auto out = io::open_output(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 140 << "\" height=\"" << size
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << margin << "\" y=\"18\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
  for (const auto& p : points) {
    const bool before = p.phase == "before";
    out << "<circle cx=\"" << io::format_number(sx(p.x), 6) << "\" cy=\"" << io::format_number(sy(p.y), 6)
        << "\" r=\"" << (p.misclassified ? 4 : 3) << "\" fill=\"" << (before ? color(p.command) : "none")
        << "\" stroke=\"" << (p.misclassified ? "black" : color(p.command)) << "\"/>\n";
  }
  for (std::size_t i = 0; i < commands.size(); ++i) {
    const double y = 40.0 + 16.0 * double(i);
    out << "<circle cx=\"" << size + 10 << "\" cy=\"" << y << "\" r=\"4\" fill=\"" << color(commands[i])
        << "\"/><text x=\"" << size + 20 << "\" y=\"" << y + 4 << "\">" << xml_escape(commands[i]) << "</text>\n";
  }
  const double y = 40.0 + 16.0 * double(commands.size()) + 10.0;
  out << "<text x=\"" << size + 4 << "\" y=\"" << y << "\">filled: before</text>\n";
  out << "<text x=\"" << size + 4 << "\" y=\"" << y + 14 << "\">hollow: after</text>\n";
  out << "<text x=\"" << size + 4 << "\" y=\"" << y + 28 << "\">black ring: misclassified</text>\n";
  out << "</svg>\n";
}

void write_shift_csv(std::span<const ShiftRow> rows, const std::filesystem::path& path) {
  auto out = io::open_output(path);
  out << "index,command,speaker,misclassified,displacement,iterations,reached_stop\n";
  for (const auto& r : rows) {
    out << r.index << ',' << csv_field(r.command) << ',' << csv_field(r.speaker) << ',' << (r.misclassified ? 1 : 0)
        << ',' << io::format_number(r.displacement, 17) << ',' << r.iterations << ',' << (r.reached_stop ? 1 : 0)
        << '\n';
  }
  if (!out) throw Error("shift table: write failed for " + path.string());
}

}  // namespace amx
