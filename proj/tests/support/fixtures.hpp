#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "linnaeus/error.hpp"
#include "linnaeus/ingestion.hpp"
#include "linnaeus/rdap.hpp"

namespace fixtures {

inline std::filesystem::path ingest_dir() { return std::filesystem::path(LINNAEUS_FIXTURE_DIR) / "ingest"; }

inline std::ifstream open(const std::string& name) {
  std::ifstream in(ingest_dir() / name, std::ios::binary);
  if (!in) throw linnaeus::DataError("missing fixture " + name);
  return in;
}

struct Sources {
  linnaeus::ingest::Parsed<linnaeus::ingest::AsRankRecord> asrank;
  linnaeus::ingest::Parsed<linnaeus::ingest::PeeringDbRecord> peeringdb;
  linnaeus::ingest::Parsed<linnaeus::ingest::IpinfoRecord> ipinfo;
  linnaeus::ingest::Parsed<linnaeus::ingest::EyeballRecord> eyeball;
};

inline Sources load_sources() {
  using namespace linnaeus::ingest;
  Sources s;
  auto a = open("asrank.jsonl");
  s.asrank = parse_asrank(a);
  auto p = open("peeringdb.json");
  s.peeringdb = parse_peeringdb(p);
  auto i = open("ipinfo.csv");
  s.ipinfo = parse_ipinfo(i);
  auto e = open("eyeball.csv");
  s.eyeball = parse_eyeball(e);
  return s;
}

/// RDAP lookup that serves the bundled responses and answers 404 otherwise.
inline linnaeus::ingest::HttpGet fixture_http(std::size_t* calls = nullptr) {
  return [calls](const std::string& url) {
    if (calls) ++*calls;
    const auto slash = url.rfind('/');
    const auto file = ingest_dir() / "rdap" / ("AS" + url.substr(slash + 1) + ".json");
    if (!std::filesystem::exists(file)) return linnaeus::ingest::HttpResponse{404, {}};
    std::ifstream in(file);
    std::stringstream ss;
    ss << in.rdbuf();
    return linnaeus::ingest::HttpResponse{200, ss.str()};
  };
}

}  // namespace fixtures
