// SPDX-License-Identifier: Apache-2.0

#include "synthetic_babi.hpp"

#include <array>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

#include "rnnlab/rng.hpp"

namespace rnnlab::testing {

namespace {

constexpr std::array<const char*, 4> kPeople{"Mary", "John", "Sandra", "Daniel"};
constexpr std::array<const char*, 6> kPlaces{"bathroom", "hallway", "garden",
                                             "office",   "bedroom", "kitchen"};
constexpr std::array<const char*, 5> kVerbs{"moved to", "went to", "travelled to",
                                            "journeyed to", "went back to"};

template <typename A>
const char* pick(const A& options, Rng& rng) {
  return options[rng.index(options.size())];
}

}  // namespace

std::string single_fact_stories(std::size_t stories, std::uint64_t seed) {
  Rng rng(seed);
  std::ostringstream os;
  for (std::size_t s = 0; s < stories; ++s) {
    std::map<std::string, std::pair<std::string, int>> where;  // person -> (place, line)
    int line = 1;
    for (int q = 0; q < 5; ++q) {
      for (int k = 0; k < 2; ++k) {
        const std::string who = pick(kPeople, rng);
        const std::string place = pick(kPlaces, rng);
        os << line << ' ' << who << ' ' << pick(kVerbs, rng) << " the " << place << ".\n";
        where[who] = {place, line};
        ++line;
      }
      auto it = where.begin();
      std::advance(it, static_cast<long>(rng.index(where.size())));
      os << line << " Where is " << it->first << "? \t" << it->second.first << '\t'
         << it->second.second << '\n';
      ++line;
    }
  }
  return os.str();
}

void write_single_fact_task(const std::filesystem::path& dir, std::size_t train_stories,
                            std::size_t test_stories, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const auto write = [&](const char* split, std::size_t n, std::uint64_t s) {
    std::ofstream out(dir / ("qa1_single-supporting-fact_" + std::string(split) + ".txt"));
    if (!out) throw std::runtime_error("cannot write into " + dir.string());
    out << single_fact_stories(n, s);
  };
  write("train", train_stories, seed);
  write("test", test_stories, seed + 1);
}

std::filesystem::path scratch_dir(const std::string& tag) {
  static int counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("rnnlab_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace rnnlab::testing
