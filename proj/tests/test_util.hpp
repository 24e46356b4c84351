// Shared helpers for the test suite: scratch directories and CLI invocation.

#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#ifndef _WIN32
#include <sys/wait.h>
#endif

namespace testutil {

inline std::filesystem::path make_temp_dir(const std::string& tag) {
  static std::mt19937_64 name_rng(std::random_device{}());
  std::filesystem::path dir;
  do {
    dir = std::filesystem::temp_directory_path() / (tag + "_" + std::to_string(name_rng()));
  } while (std::filesystem::exists(dir));
  std::filesystem::create_directories(dir);
  return dir;
}

// Self-deleting scratch directory.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag = "bt_test") : path(make_temp_dir(tag)) {}
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path.string(); }
  std::string sub(const std::string& name) const { return (path / name).string(); }
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

inline std::string cli_path() { return BT_CLI_PATH; }
inline std::string source_dir() { return BT_SOURCE_DIR; }

// Runs the project CLI with the given argument string, capturing both streams.
inline CliResult run_cli(const std::string& args) {
  TempDir io("bt_cli_io");
  const std::string out_path = io.sub("out.txt");
  const std::string err_path = io.sub("err.txt");
  const std::string cmd =
      "\"" + cli_path() + "\" " + args + " >\"" + out_path + "\" 2>\"" + err_path + "\"";
  const int raw = std::system(cmd.c_str());
  CliResult r;
#ifndef _WIN32
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
#else
  r.exit_code = raw;
#endif
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

inline bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

}  // namespace testutil
