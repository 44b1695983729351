#include "bce3s/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace bce3s {
namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  for (auto& f : fields) {
    const auto begin = f.find_first_not_of(" \t\r");
    const auto end = f.find_last_not_of(" \t\r");
    f = begin == std::string::npos ? std::string() : f.substr(begin, end - begin + 1);
  }
  return fields;
}

double parse_double(const std::string& s, int line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing garbage");
    return v;
  } catch (const std::exception&) {
    throw IoError("line " + std::to_string(line_no) + ": cannot parse number '" + s + "'");
  }
}

long long parse_int(const std::string& s, int line_no) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing garbage");
    return v;
  } catch (const std::exception&) {
    throw IoError("line " + std::to_string(line_no) + ": cannot parse integer '" + s + "'");
  }
}

void ensure_parent_dir(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

std::ofstream open_out(const std::string& path) {
  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_feature_dump(std::ostream& out, const FeatureDump& dump) {
  out << "ltr-dump v1, " << dump.num_classes << ", " << dump.dim << ", "
      << dump.features.size() << "\n";
  for (const auto& f : dump.features) {
    out << f.label;
    for (double v : f.x) out << ", " << format_double(v);
    out << "\n";
  }
}

void write_classifier_block(std::ostream& out, const Classifier& clf) {
  out << "ltr-classifier v1, " << clf.num_classes() << ", " << clf.dim() << ", "
      << to_string(clf.normalization) << "\n";
  for (int k = 0; k < clf.num_classes(); ++k) {
    const auto& row = clf.weights[static_cast<std::size_t>(k)];
    bool first = true;
    for (double v : row) {
      out << (first ? "" : ", ") << format_double(v);
      first = false;
    }
    out << ", " << format_double(clf.biases[static_cast<std::size_t>(k)]) << "\n";
  }
}

void write_feature_dump_file(const std::string& path, const FeatureDump& dump) {
  auto out = open_out(path);
  write_feature_dump(out, dump);
}

void write_checkpoint_file(const std::string& path, const FeatureDump& features,
                           const Classifier& clf) {
  auto out = open_out(path);
  write_feature_dump(out, features);
  write_classifier_block(out, clf);
}

FeatureDump read_feature_dump_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  int line_no = 0;

  if (!std::getline(in, line)) throw IoError("'" + path + "' is empty");
  ++line_no;
  auto header = split_csv(line);
  if (header.size() != 4 || header[0] != "ltr-dump v1")
    throw IoError("line 1: expected 'ltr-dump v1, K, d, count' header");
  FeatureDump dump;
  dump.num_classes = static_cast<int>(parse_int(header[1], line_no));
  dump.dim = static_cast<int>(parse_int(header[2], line_no));
  const long long count = parse_int(header[3], line_no);
  if (dump.num_classes < 1 || dump.dim < 1 || count < 0)
    throw IoError("line 1: invalid dump header values");

  dump.features.reserve(static_cast<std::size_t>(count));
  for (long long i = 0; i < count; ++i) {
    if (!std::getline(in, line))
      throw IoError("line " + std::to_string(line_no + 1) + ": unexpected end of file");
    ++line_no;
    const auto fields = split_csv(line);
    if (static_cast<int>(fields.size()) != dump.dim + 1)
      throw IoError("line " + std::to_string(line_no) + ": expected " +
                    std::to_string(dump.dim + 1) + " fields, got " +
                    std::to_string(fields.size()));
    LabeledFeature f;
    f.label = static_cast<int>(parse_int(fields[0], line_no));
    if (f.label < 0 || f.label >= dump.num_classes)
      throw IoError("line " + std::to_string(line_no) + ": label out of range");
    f.x.reserve(static_cast<std::size_t>(dump.dim));
    for (int t = 0; t < dump.dim; ++t)
      f.x.push_back(parse_double(fields[static_cast<std::size_t>(t) + 1], line_no));
    dump.features.push_back(std::move(f));
  }
  return dump;
}

Classifier read_classifier_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.rfind("ltr-classifier v1", 0) != 0) continue;
    const auto header = split_csv(line);
    if (header.size() != 4)
      throw IoError("line " + std::to_string(line_no) +
                    ": expected 'ltr-classifier v1, K, d, mode' header");
    const int K = static_cast<int>(parse_int(header[1], line_no));
    const int d = static_cast<int>(parse_int(header[2], line_no));
    if (K < 1 || d < 1)
      throw IoError("line " + std::to_string(line_no) + ": invalid classifier header");
    Classifier clf;
    clf.normalization = normalization_from_string(header[3]);
    clf.weights.resize(static_cast<std::size_t>(K));
    clf.biases.resize(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      if (!std::getline(in, line))
        throw IoError("line " + std::to_string(line_no + 1) + ": unexpected end of file");
      ++line_no;
      const auto fields = split_csv(line);
      if (static_cast<int>(fields.size()) != d + 1)
        throw IoError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(d + 1) + " fields, got " +
                      std::to_string(fields.size()));
      auto& row = clf.weights[static_cast<std::size_t>(k)];
      row.reserve(static_cast<std::size_t>(d));
      for (int t = 0; t < d; ++t)
        row.push_back(parse_double(fields[static_cast<std::size_t>(t)], line_no));
      clf.biases[static_cast<std::size_t>(k)] =
          parse_double(fields[static_cast<std::size_t>(d)], line_no);
    }
    return clf;
  }
  throw IoError("'" + path + "' contains no classifier block");
}

void write_history_csv(const std::string& path, const History& history) {
  auto out = open_out(path);
  out << "epoch,loss_total,loss_sc,loss_ss,loss_cc,lr,acc_all,acc_many,acc_medium,acc_few\n";
  for (const auto& e : history.epochs) {
    out << e.epoch << ',' << format_double(e.loss_total) << ',' << format_double(e.loss_sc)
        << ',' << format_double(e.loss_ss) << ',' << format_double(e.loss_cc) << ','
        << format_double(e.lr) << ',' << format_double(e.eval.acc_all) << ','
        << (e.eval.acc_many ? format_double(*e.eval.acc_many) : "") << ','
        << (e.eval.acc_medium ? format_double(*e.eval.acc_medium) : "") << ','
        << (e.eval.acc_few ? format_double(*e.eval.acc_few) : "") << "\n";
  }
}

void write_metric_csv(const std::string& path, const MetricReport& report) {
  auto out = open_out(path);
  out << "class,compactness,feat_sep,clf_sep\n";
  const std::size_t K = report.classifier_sep.size();
  for (std::size_t k = 0; k < K; ++k) {
    out << k << ','
        << (k < report.compactness.size() && report.compactness[k]
                ? format_double(*report.compactness[k])
                : "")
        << ','
        << (k < report.feature_sep.size() && report.feature_sep[k]
                ? format_double(*report.feature_sep[k])
                : "")
        << ',' << (report.classifier_sep[k] ? format_double(*report.classifier_sep[k]) : "")
        << "\n";
  }
}

void write_separability_csv(const std::string& path, const SeparabilityMatrix& matrix) {
  auto out = open_out(path);
  out << "class";
  for (int j = 0; j < matrix.num_classes; ++j) out << ",s_" << j;
  out << "\n";
  for (int j = 0; j < matrix.num_classes; ++j) {
    out << j;
    for (int k = 0; k < matrix.num_classes; ++k) out << ',' << format_double(matrix.at(j, k));
    out << "\n";
  }
}

std::string metric_summary_line(const MetricReport& report) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "compactness %.3f+/-%.3f | feat_sep %.3f+/-%.3f | clf_sep %.3f+/-%.3f | "
                "skipped_cosines %lld",
                report.mean_compactness(), report.std_compactness(),
                report.mean_feature_sep(), report.std_feature_sep(),
                report.mean_classifier_sep(), report.std_classifier_sep(),
                report.skipped_cosines);
  return buf;
}

bool files_byte_identical(const std::string& a, const std::string& b) {
  std::ifstream fa(a, std::ios::binary);
  std::ifstream fb(b, std::ios::binary);
  if (!fa || !fb) throw IoError("cannot open files for comparison");
  std::ostringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  return sa.str() == sb.str();
}

}  // namespace bce3s
