#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mhs/cli.hpp"
#include "mhs/config.hpp"
#include "mhs/error.hpp"

using namespace mhs;
using namespace mhs::config;

namespace {

RunConfig from_text(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  apply_file(c, in);
  return c;
}

struct Run {
  int code;
  std::string out, err;
};

Run run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mhs-rnn");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  std::istringstream in;
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), in, out, err);
  return {code, out.str(), err.str()};
}

std::string line_for(const std::string& dump, const std::string& key) {
  std::istringstream in(dump);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + " = ", 0) == 0) return line;
  return "";
}

}  // namespace

TEST_CASE("defaults") {
  RunConfig c;
  CHECK_NOTHROW(validate(c));
  CHECK(value_of(c, "learning_rate") == "0.05");
  CHECK(value_of(c, "variant") == "attention");
  CHECK(value_of(c, "comma_is_boundary") == "false");
  CHECK(value_of(c, "embed_dim") == "100");
  CHECK(value_of(c, "hidden_dim") == "50");
  CHECK(c.explicit_keys.empty());
}

TEST_CASE("file parsing: comments, whitespace and every value kind") {
  const auto c = from_text(
      "# a comment line\n"
      "\n"
      "  learning_rate =  0.2   # trailing comment\n"
      "variant=base\n"
      "hidden_dim = 7\n"
      "comma_is_boundary = yes\n"
      "lr_grid = 0.1, 0.5,1\n"
      "dataset = data/train.csv\n");
  CHECK(c.train.learning_rate == 0.2);
  CHECK(c.model.variant == net::Variant::base);
  CHECK(c.model.hidden_dim == 7);
  CHECK(c.comma_is_boundary);
  CHECK(c.lr_grid == std::vector<double>{0.1, 0.5, 1.0});
  CHECK(c.dataset == "data/train.csv");
  CHECK(c.explicit_keys.count("hidden_dim") == 1);
  CHECK(c.explicit_keys.count("embed_dim") == 0);
}

TEST_CASE("errors name the offending key") {
  auto message = [](const std::string& text) {
    try {
      from_text(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("bogus_key = 1\n").find("bogus_key") != std::string::npos);
  CHECK(message("hidden_dim = seven\n").find("hidden_dim") != std::string::npos);
  CHECK(message("hidden_dim = -3\n").find("hidden_dim") != std::string::npos);
  CHECK(message("parallel = maybe\n").find("parallel") != std::string::npos);
  CHECK(message("variant = deep\n").find("variant") != std::string::npos);
  CHECK(message("just words\n").find("line 1") != std::string::npos);
  RunConfig c;
  CHECK_THROWS_AS(apply_file(c, std::filesystem::path("/nonexistent/x.cfg")),
                  ConfigError);
}

TEST_CASE("range validation") {
  for (const char* bad : {"slope = 0.5", "slope = 6", "learning_rate = 0",
                          "momentum = 1", "val_fraction = 1",
                          "report_format = xml", "num_classes = 1",
                          "slope_grid = 1,9", "batch_size = 0"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(validate(from_text(bad)), ConfigError);
  }
  CHECK_NOTHROW(validate(from_text("slope = 5\nslope_grid = 1,2.5,5")));
}

TEST_CASE("written configuration reads back identically") {
  auto c = from_text("learning_rate = 0.123\nslope_grid = 1,3\nseed = 99\n");
  std::ostringstream dump;
  write(dump, c);
  const auto back = from_text(dump.str());
  for (const auto& key : keys()) {
    CAPTURE(key);
    CHECK(value_of(back, key) == value_of(c, key));
  }
  for (const auto& key : keys()) CHECK(is_key(key));
  CHECK_FALSE(is_key("nope"));
}

TEST_CASE("three-level precedence: defaults, then file, then flags") {
  const auto path = std::filesystem::temp_directory_path() / "mhs_prec.cfg";
  {
    std::ofstream f(path);
    f << "hidden_dim = 11\nembed_dim = 12\nseed = 5\n";
  }
  const auto r = run_cli({"--config", path.string(), "--embed_dim", "13",
                      "--print-config", "eval"});
  CHECK(r.code == cli::kExitUsage);  // eval without a checkpoint
  CHECK(line_for(r.out, "batch_size") == "batch_size = 64");    // default
  CHECK(line_for(r.out, "hidden_dim") == "hidden_dim = 11");    // file
  CHECK(line_for(r.out, "embed_dim") == "embed_dim = 13");      // flag
  CHECK(line_for(r.out, "seed") == "seed = 5");

  const auto s = run_cli({"--config", path.string(), "--seed", "8",
                      "--print-config", "eval"});
  CHECK(line_for(s.out, "seed") == "seed = 8");
  std::filesystem::remove(path);

  const auto u = run_cli({"--not_a_key", "1", "gradcheck"});
  CHECK(u.code == cli::kExitUsage);
  CHECK(u.err.find("not_a_key") != std::string::npos);
}
