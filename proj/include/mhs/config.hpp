#pragma once

// Run configuration shared by the CLI commands. Values resolve in three
// layers: built-in defaults, then a flat `key = value` file, then flags.

#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mhs/network.hpp"
#include "mhs/train.hpp"

namespace mhs::config {

struct RunConfig {
  train::TrainConfig train;
  net::ModelConfig model;  // vocab_size is filled in from the data
  std::string dataset;
  std::string test_dataset;
  std::string embeddings;
  std::string checkpoint;
  std::string resume;
  std::string out_dir = "out";
  double val_fraction = 0.1;
  std::vector<double> lr_grid;
  std::vector<double> slope_grid;
  std::size_t grid_epochs = 5;
  bool comma_is_boundary = false;
  bool log_timing = false;
  std::string report_format = "text";  // text | tsv
  std::size_t synthetic_train = 500;
  std::size_t synthetic_test = 200;

  // Keys given by a file or flag rather than defaulted.
  std::set<std::string> explicit_keys;
};

// Every recognised key, in documentation order.
const std::vector<std::string>& keys();
bool is_key(std::string_view key);

// Parses `value` into the field named `key`. ConfigError names the key when
// it is unknown or the value does not parse.
void apply(RunConfig& config, std::string_view key, std::string_view value);

// `key = value` lines; '#' starts a comment; blank lines ignored.
void apply_file(RunConfig& config, std::istream& in);
void apply_file(RunConfig& config, const std::filesystem::path& path);

// Range checks across fields; ConfigError on failure.
void validate(const RunConfig& config);

std::string value_of(const RunConfig& config, std::string_view key);
// Resolved configuration, one `key = value` line per key.
void write(std::ostream& out, const RunConfig& config);

}  // namespace mhs::config
