#include "mhs/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

#include "mhs/error.hpp"

namespace mhs::config {

namespace {

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw ConfigError("invalid value '" + std::string(value) + "' for key '" +
                    std::string(key) + "'");
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(std::string_view key, std::string_view v) {
  std::string s = trim(v);
  try {
    std::size_t used = 0;
    double d = std::stod(s, &used);
    if (used != s.size()) bad_value(key, v);
    return d;
  } catch (const std::logic_error&) {
    bad_value(key, v);
  }
}

std::size_t parse_size(std::string_view key, std::string_view v) {
  std::string s = trim(v);
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    bad_value(key, v);
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  const std::string s = trim(v);
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  bad_value(key, v);
}

std::vector<double> parse_list(std::string_view key, std::string_view v) {
  std::vector<double> out;
  std::string item;
  std::istringstream in{std::string(v)};
  while (std::getline(in, item, ','))
    if (!trim(item).empty()) out.push_back(parse_double(key, item));
  return out;
}

// Shortest text that reads back to the same double.
std::string show(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string show(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out += (i ? "," : "") + show(v[i]);
  return out;
}

struct Field {
  std::string name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define MHS_STRING(key, member)                                          \
  Field{key, [](RunConfig& c, std::string_view v) { c.member = trim(v); }, \
        [](const RunConfig& c) { return c.member; }}
#define MHS_SIZE(key, member)                                     \
  Field{key,                                                      \
        [](RunConfig& c, std::string_view v) {                    \
          c.member = parse_size(key, v);                          \
        },                                                        \
        [](const RunConfig& c) { return std::to_string(c.member); }}
#define MHS_DOUBLE(key, member)                                           \
  Field{key,                                                              \
        [](RunConfig& c, std::string_view v) {                            \
          c.member = parse_double(key, v);                                \
        },                                                                \
        [](const RunConfig& c) { return show(c.member); }}
#define MHS_BOOL(key, member)                                              \
  Field{key,                                                               \
        [](RunConfig& c, std::string_view v) {                             \
          c.member = parse_bool(key, v);                                   \
        },                                                                 \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}
#define MHS_LIST(key, member)                                             \
  Field{key,                                                              \
        [](RunConfig& c, std::string_view v) {                            \
          c.member = parse_list(key, v);                                  \
        },                                                                \
        [](const RunConfig& c) { return show(c.member); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      MHS_STRING("dataset", dataset),
      MHS_STRING("test_dataset", test_dataset),
      MHS_STRING("embeddings", embeddings),
      MHS_STRING("checkpoint", checkpoint),
      MHS_STRING("resume", resume),
      MHS_STRING("out_dir", out_dir),
      Field{"variant",
            [](RunConfig& c, std::string_view v) {
              try {
                c.model.variant = net::parse_variant(trim(v));
              } catch (const Error&) {
                bad_value("variant", v);
              }
            },
            [](const RunConfig& c) {
              return std::string(net::variant_name(c.model.variant));
            }},
      MHS_SIZE("embed_dim", model.embed_dim),
      MHS_SIZE("hidden_dim", model.hidden_dim),
      MHS_SIZE("num_classes", model.num_classes),
      MHS_DOUBLE("slope", model.slope),
      MHS_DOUBLE("init_scale", model.init_scale),
      MHS_BOOL("train_embeddings", model.train_embeddings),
      MHS_BOOL("literal_phrase_output_gate", model.literal_phrase_output_gate),
      MHS_BOOL("comma_is_boundary", comma_is_boundary),
      MHS_DOUBLE("learning_rate", train.learning_rate),
      MHS_DOUBLE("momentum", train.momentum),
      MHS_SIZE("batch_size", train.batch_size),
      MHS_SIZE("max_epochs", train.max_epochs),
      Field{"seed",
            [](RunConfig& c, std::string_view v) {
              c.train.seed = parse_size("seed", v);
            },
            [](const RunConfig& c) { return std::to_string(c.train.seed); }},
      MHS_SIZE("patience", train.patience),
      MHS_DOUBLE("clip_norm", train.clip_norm),
      MHS_BOOL("parallel", train.parallel),
      Field{"threads",
            [](RunConfig& c, std::string_view v) {
              c.train.threads = static_cast<int>(parse_size("threads", v));
            },
            [](const RunConfig& c) { return std::to_string(c.train.threads); }},
      MHS_DOUBLE("val_fraction", val_fraction),
      MHS_LIST("lr_grid", lr_grid),
      MHS_LIST("slope_grid", slope_grid),
      MHS_SIZE("grid_epochs", grid_epochs),
      MHS_BOOL("log_timing", log_timing),
      MHS_STRING("report_format", report_format),
      MHS_SIZE("synthetic_train", synthetic_train),
      MHS_SIZE("synthetic_test", synthetic_test),
  };
  return f;
}

#undef MHS_STRING
#undef MHS_SIZE
#undef MHS_DOUBLE
#undef MHS_BOOL
#undef MHS_LIST

const Field* field(std::string_view key) {
  for (const auto& f : fields())
    if (f.name == key) return &f;
  return nullptr;
}

}  // namespace

const std::vector<std::string>& keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.name);
    return out;
  }();
  return k;
}

bool is_key(std::string_view key) { return field(key) != nullptr; }

void apply(RunConfig& config, std::string_view key, std::string_view value) {
  const Field* f = field(key);
  if (!f) throw ConfigError("unknown configuration key '" + std::string(key) + "'");
  f->set(config, value);
  config.explicit_keys.insert(std::string(key));
}

void apply_file(RunConfig& config, std::istream& in) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected 'key = value' on config line " +
                        std::to_string(number));
    apply(config, trim(std::string_view(line).substr(0, eq)),
          std::string_view(line).substr(eq + 1));
  }
}

void apply_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  apply_file(config, in);
}

void validate(const RunConfig& c) {
  train::validate(c.train);
  if (!(c.train.learning_rate > 0))
    throw ConfigError("learning_rate must be positive");
  auto check_slope = [](double a) {
    if (!(a >= 1.0 && a <= 5.0))
      throw ConfigError("slope must lie in [1, 5], got " + show(a));
  };
  check_slope(c.model.slope);
  for (double a : c.slope_grid) check_slope(a);
  for (double lr : c.lr_grid)
    if (!(lr > 0)) throw ConfigError("lr_grid entries must be positive");
  if (c.model.embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
  if (c.model.hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
  if (c.model.num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (!(c.val_fraction > 0 && c.val_fraction < 1))
    throw ConfigError("val_fraction must lie in (0, 1)");
  if (c.report_format != "text" && c.report_format != "tsv")
    throw ConfigError("report_format must be 'text' or 'tsv'");
}

std::string value_of(const RunConfig& config, std::string_view key) {
  const Field* f = field(key);
  if (!f) throw ConfigError("unknown configuration key '" + std::string(key) + "'");
  return f->get(config);
}

void write(std::ostream& out, const RunConfig& config) {
  for (const auto& f : fields()) out << f.name << " = " << f.get(config) << '\n';
}

}  // namespace mhs::config
