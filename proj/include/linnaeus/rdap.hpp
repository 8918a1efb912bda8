#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "linnaeus/ingestion.hpp"

namespace linnaeus::ingest {

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Performs a GET. Throws BackendError when no HTTP response could be obtained.
using HttpGet = std::function<HttpResponse(const std::string& url)>;

/// HTTPS transport backed by cpp-httplib. Follows redirects (rdap.org answers with 302).
HttpGet make_http_get(std::chrono::seconds timeout = std::chrono::seconds(20));

/// On-disk response cache, one file per ASN. A 404 is stored as an absence marker.
class RdapCache {
 public:
  explicit RdapCache(std::filesystem::path dir);

  /// nullopt: miss. Some(nullopt): cached absence. Some(body): cached response.
  std::optional<std::optional<std::string>> get(Asn asn) const;
  void put(Asn asn, const std::optional<std::string>& body);

  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path body_path(Asn asn) const;
  std::filesystem::path absent_path(Asn asn) const;

  std::filesystem::path dir_;
  mutable std::mutex mu_;
};

/// IANA RDAP bootstrap for ASN ranges.
class RdapBootstrap {
 public:
  static RdapBootstrap parse(const nlohmann::json& doc);
  std::optional<std::string> endpoint_for(Asn asn) const;
  std::size_t size() const noexcept { return ranges_.size(); }

 private:
  struct Range {
    Asn first = 0;
    Asn last = 0;
    std::string base;
  };
  std::vector<Range> ranges_;
};

/// Extracts the fields used by the merge from an RDAP autnum response. Throws ParseError.
RdapRecord parse_rdap(Asn asn, std::string_view body);

struct RdapOptions {
  std::string endpoint = "https://rdap.org";
  std::optional<RdapBootstrap> bootstrap;  // overrides endpoint for covered ranges
  int attempts = 3;
  std::chrono::milliseconds backoff{500};
  std::size_t jobs = 4;
};

struct RdapStats {
  std::atomic<std::size_t> network_calls{0};
  std::atomic<std::size_t> cache_hits{0};
  std::atomic<std::size_t> failures{0};
  std::atomic<std::size_t> parse_errors{0};
};

class RdapClient {
 public:
  RdapClient(HttpGet http, RdapCache* cache, RdapOptions options = {});

  /// Absent when the registry has no record or the request kept failing.
  std::optional<RdapRecord> fetch(Asn asn);

  /// Batch lookup for merge_records. Malformed responses are counted and treated as absent.
  RdapLookup lookup();

  const RdapStats& stats() const noexcept { return stats_; }

 private:
  std::string url_for(Asn asn) const;

  HttpGet http_;
  RdapCache* cache_;
  RdapOptions options_;
  RdapStats stats_;
};

/// Convenience wrapper around RdapClient::fetch.
std::optional<RdapRecord> fetch_rdap(Asn asn, const std::string& endpoint, RdapCache& cache, const HttpGet& http);

}  // namespace linnaeus::ingest
