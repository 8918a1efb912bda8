#include "linnaeus/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <utility>

#include "linnaeus/error.hpp"
#include "linnaeus/util.hpp"

namespace linnaeus {

namespace {

TagSet parse_tag_list(std::string_view field, const Taxonomy& taxonomy, Asn asn) {
  TagSet tags;
  std::string cur;
  auto flush = [&] {
    auto t = util::trim(cur);
    cur.clear();
    if (t.empty()) return;
    TagId id(t);
    if (!taxonomy.contains(id)) throw DataError("AS" + std::to_string(asn) + ": unknown tag '" + t + "'");
    tags.insert(std::move(id));
  };
  for (char c : field) {
    if (c == ';' || c == '|') flush();
    else cur.push_back(c);
  }
  flush();
  return tags;
}

void check_row(const LabeledExample& row, const Taxonomy& taxonomy, std::set<Asn>& seen) {
  if (!seen.insert(row.asn).second) throw DataError("duplicate AS" + std::to_string(row.asn) + " in corpus");
  auto result = taxonomy.validate_tagset(row.tags);
  if (!result.ok()) throw DataError("AS" + std::to_string(row.asn) + ": " + result.violations.front().message);
}

void check_taxonomy(const std::string& name, const std::string& version, const Taxonomy& taxonomy) {
  if (name != taxonomy.name() || version != taxonomy.version())
    throw DataError("corpus was annotated with taxonomy " + name + " " + version + ", active taxonomy is " +
                    taxonomy.name() + " " + taxonomy.version());
}

std::string join_tags(const TagSet& tags, const Taxonomy& taxonomy) {
  std::string out;
  for (const auto& t : taxonomy.ordered(tags)) {
    if (!out.empty()) out += ';';
    out += t.value;
  }
  return out;
}

}  // namespace

AnnotatedCorpus read_corpus_csv(std::istream& in, const Taxonomy& taxonomy) {
  AnnotatedCorpus corpus;
  corpus.taxonomy_name = taxonomy.name();
  corpus.taxonomy_version = taxonomy.version();

  std::string line;
  std::vector<std::string> fields;
  int asn_col = -1, tags_col = -1, note_col = -1;
  bool have_header = false;
  std::set<Asn> seen;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (util::trim(line).empty()) continue;
    if (line.rfind('#', 0) == 0) {
      // "#taxonomy=<name>;version=<version>"
      std::string name, version;
      std::istringstream meta(line.substr(1));
      std::string kv;
      while (std::getline(meta, kv, ';')) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        auto key = util::trim(kv.substr(0, eq));
        auto value = util::trim(kv.substr(eq + 1));
        if (key == "taxonomy") name = value;
        if (key == "version") version = value;
      }
      if (!name.empty()) {
        check_taxonomy(name, version, taxonomy);
        corpus.taxonomy_name = name;
        corpus.taxonomy_version = version;
      }
      continue;
    }
    if (!util::split_csv_line(line, fields)) throw DataError("corpus line " + std::to_string(line_no) + ": unterminated quote");
    if (!have_header) {
      for (std::size_t i = 0; i < fields.size(); ++i) {
        auto h = util::to_lower(util::trim(fields[i]));
        if (h == "asn") asn_col = static_cast<int>(i);
        else if (h == "tags" || h == "labels") tags_col = static_cast<int>(i);
        else if (h == "note" || h == "source") note_col = static_cast<int>(i);
      }
      if (asn_col < 0 || tags_col < 0) throw DataError("corpus header needs 'asn' and 'tags' columns");
      have_header = true;
      continue;
    }
    auto field = [&](int col) { return col >= 0 && static_cast<std::size_t>(col) < fields.size() ? fields[col] : std::string(); };
    auto asn = ingest::parse_asn(field(asn_col));
    if (!asn) throw DataError("corpus line " + std::to_string(line_no) + ": invalid asn '" + field(asn_col) + "'");
    LabeledExample row{*asn, parse_tag_list(field(tags_col), taxonomy, *asn)};
    check_row(row, taxonomy, seen);
    corpus.rows.push_back(std::move(row));
    corpus.notes.push_back(field(note_col));
  }
  if (!have_header && !corpus.rows.empty()) throw DataError("corpus has no header");
  return corpus;
}

void write_corpus_csv(std::ostream& out, const AnnotatedCorpus& corpus, const Taxonomy& taxonomy) {
  out << "#taxonomy=" << corpus.taxonomy_name << ";version=" << corpus.taxonomy_version << '\n';
  out << "asn,tags,note\n";
  for (std::size_t i = 0; i < corpus.rows.size(); ++i) {
    const auto& r = corpus.rows[i];
    out << r.asn << ',' << util::csv_escape(join_tags(r.tags, taxonomy)) << ','
        << util::csv_escape(i < corpus.notes.size() ? corpus.notes[i] : std::string()) << '\n';
  }
}

nlohmann::ordered_json to_json(const AnnotatedCorpus& corpus, const Taxonomy& taxonomy) {
  nlohmann::ordered_json j;
  j["taxonomy"] = {{"name", corpus.taxonomy_name}, {"version", corpus.taxonomy_version}};
  auto& rows = j["rows"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < corpus.rows.size(); ++i) {
    nlohmann::ordered_json r;
    r["asn"] = corpus.rows[i].asn;
    auto& tags = r["tags"] = nlohmann::ordered_json::array();
    for (const auto& t : taxonomy.ordered(corpus.rows[i].tags)) tags.push_back(t.value);
    r["note"] = i < corpus.notes.size() ? corpus.notes[i] : std::string();
    rows.push_back(std::move(r));
  }
  return j;
}

AnnotatedCorpus corpus_from_json(const nlohmann::json& doc, const Taxonomy& taxonomy) {
  try {
    AnnotatedCorpus corpus;
    corpus.taxonomy_name = doc.at("taxonomy").at("name").get<std::string>();
    corpus.taxonomy_version = doc.at("taxonomy").at("version").get<std::string>();
    check_taxonomy(corpus.taxonomy_name, corpus.taxonomy_version, taxonomy);
    std::set<Asn> seen;
    for (const auto& r : doc.at("rows")) {
      LabeledExample row;
      row.asn = r.at("asn").get<Asn>();
      for (const auto& t : r.at("tags")) {
        TagId id(t.get<std::string>());
        if (!taxonomy.contains(id)) throw DataError("AS" + std::to_string(row.asn) + ": unknown tag '" + id.value + "'");
        row.tags.insert(std::move(id));
      }
      check_row(row, taxonomy, seen);
      corpus.rows.push_back(std::move(row));
      corpus.notes.push_back(r.value("note", ""));
    }
    return corpus;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corpus: ") + e.what());
  }
}

AnnotatedCorpus load_corpus(const std::filesystem::path& path, const Taxonomy& taxonomy) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus " + path.string());
  if (path.extension() == ".json") {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("corpus " + path.string() + ": " + e.what());
    }
    return corpus_from_json(doc, taxonomy);
  }
  return read_corpus_csv(in, taxonomy);
}

void save_corpus(const std::filesystem::path& path, const AnnotatedCorpus& corpus, const Taxonomy& taxonomy) {
  std::ostringstream out;
  if (path.extension() == ".json")
    out << to_json(corpus, taxonomy).dump(1) << '\n';
  else
    write_corpus_csv(out, corpus, taxonomy);
  util::write_file_atomic(path, out.str());
}

CorpusStats corpus_stats(const AnnotatedCorpus& corpus, const Taxonomy& taxonomy) {
  CorpusStats stats;
  stats.rows = corpus.rows.size();
  std::map<TagId, std::size_t> counts;
  for (const auto& r : corpus.rows)
    for (const auto& t : r.tags) ++counts[t];
  for (const auto& n : taxonomy.nodes()) stats.counts.push_back({n.id, n.level, counts[n.id]});
  return stats;
}

nlohmann::ordered_json CorpusStats::to_json() const {
  nlohmann::ordered_json j;
  j["rows"] = rows;
  auto& arr = j["counts"] = nlohmann::ordered_json::array();
  for (const auto& c : counts) arr.push_back({{"tag", c.tag.value}, {"level", linnaeus::to_string(c.level)}, {"count", c.count}});
  return j;
}

std::string CorpusStats::render_text() const {
  std::size_t width = 10;
  for (const auto& c : counts) width = std::max(width, c.tag.value.size() + 2);
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << "Category" << std::right << std::setw(8) << "Count" << '\n';
  for (const auto& c : counts) {
    std::string label = c.level == Level::sub ? "  " + c.tag.value : c.tag.value;
    out << std::left << std::setw(static_cast<int>(width)) << label << std::right << std::setw(8) << c.count << '\n';
  }
  out << std::left << std::setw(static_cast<int>(width)) << "Total rows" << std::right << std::setw(8) << rows << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

const std::vector<std::string>& countries() {
  static const std::vector<std::string> c{"US", "DE", "BR", "IN", "JP", "FR", "GB", "NG", "AU", "ZA", "CA", "MX"};
  return c;
}
const std::vector<std::string>& traffic_tiers() {
  static const std::vector<std::string> t{"0-20Mbps",   "20-100Mbps", "100-1000Mbps", "1-5Gbps",  "5-10Gbps",
                                          "10-20Gbps", "20-50Gbps",  "50-100Gbps",   "100+Gbps"};
  return t;
}
const std::vector<std::string>& geo_scopes() {
  static const std::vector<std::string> s{"Regional", "North America", "Asia Pacific", "Europe", "South America",
                                          "Africa",   "Australia",     "Middle East",  "Global"};
  return s;
}
const std::vector<std::string>& fillers() {
  static const std::vector<std::string> f{"Northwind", "Bluefin", "Cedar",   "Granite", "Harbor",  "Juniper",
                                          "Kestrel",   "Lumen",   "Meridian", "Oakridge", "Pioneer", "Quartz",
                                          "Riverbend", "Summit",  "Tidewater", "Vantage", "Willow",  "Zephyr"};
  return f;
}

// Typical log-scale magnitudes per numeric slot, in numeric_feature_names() order.
constexpr std::array<double, kNumericFeatureCount> kBaseLog{2.5, 1.0, 1.5, 2.0, 11.0, 3.0, 2.5, 10.0, 9.0, 9.0, 1.5, 1.0, 1.0};

std::vector<std::string> tokens_of(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c == '-') cur.push_back(static_cast<char>(std::tolower(c)));
    else if (!cur.empty()) out.push_back(std::exchange(cur, {}));
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

bool contains_run(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  return !needle.empty() && std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

}  // namespace

SyntheticSpec default_synthetic_spec(const Taxonomy& taxonomy, std::size_t per_category, double co_label_fraction,
                                     std::uint64_t seed) {
  SyntheticSpec spec;
  spec.seed = seed;
  spec.keywords = default_keyword_table(taxonomy);
  spec.co_label_fraction = co_label_fraction;
  const auto& top = taxonomy.top_level();
  for (std::size_t i = 0; i < top.size(); ++i) {
    spec.per_category[top[i]] = per_category;
    if (top.size() > 1) spec.co_labels.emplace_back(top[i], top[(i + 1) % top.size()]);
    NumericProfile p;
    for (std::size_t k = 0; k < kNumericFeatureCount; ++k) {
      // Spread categories over distinct magnitudes: a fixed pseudo-random offset per (category, slot).
      const auto h = (i * 7 + k * 13 + (i * k) % 5) % 7;
      p.log_mean[k] = kBaseLog[k] + 0.8 * (static_cast<double>(h) - 3.0);
    }
    p.country = countries()[i % countries().size()];
    p.traffic_tier = traffic_tiers()[i % traffic_tiers().size()];
    p.geo_scope = geo_scopes()[(i * 5) % geo_scopes().size()];
    spec.generators[top[i]] = p;
  }
  return spec;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec, const Taxonomy& taxonomy) {
  std::map<TagId, std::vector<std::string>> keyword_tokens;
  for (const auto& [kw, tag] : spec.keywords) {
    if (!taxonomy.contains(tag)) throw DataError("synthetic keyword for unknown tag '" + tag.value + "'");
    keyword_tokens[tag] = tokens_of(kw);
    if (keyword_tokens[tag].empty()) throw DataError("empty synthetic keyword for '" + tag.value + "'");
  }
  // A keyword that occurs inside another would make the mock assign both tags.
  for (const auto& [a, ta] : keyword_tokens)
    for (const auto& [b, tb] : keyword_tokens)
      if (a != b && contains_run(tb, ta))
        throw DataError("synthetic keyword for '" + a.value + "' occurs inside the keyword for '" + b.value + "'");
  for (const auto& f : fillers())
    for (const auto& [tag, tokens] : keyword_tokens)
      if (contains_run(tokens_of(f), tokens)) throw DataError("filler word collides with keyword of '" + tag.value + "'");

  for (const auto& [tag, n] : spec.per_category) {
    if (!taxonomy.contains(tag) || taxonomy.node(tag).level != Level::top)
      throw DataError("synthetic category '" + tag.value + "' is not a top-level tag");
    if (n == 0) continue;
    if (!spec.generators.contains(tag)) throw DataError("no synthetic generator for '" + tag.value + "'");
    if (!keyword_tokens.contains(tag)) throw DataError("no synthetic keyword for '" + tag.value + "'");
    for (const auto& child : taxonomy.children(tag))
      if (!keyword_tokens.contains(child)) throw DataError("no synthetic keyword for '" + child.value + "'");
  }
  std::map<TagId, TagId> partner;
  for (const auto& [a, b] : spec.co_labels) {
    if (!taxonomy.contains(a) || !taxonomy.contains(b)) throw DataError("co-label pair names an unknown tag");
    partner[a] = b;
  }

  SyntheticData data;
  data.corpus.taxonomy_name = taxonomy.name();
  data.corpus.taxonomy_version = taxonomy.version();
  data.mock_table = spec.keywords;
  util::Rng rng(spec.seed);
  Asn next_asn = spec.first_asn;

  auto pick = [&](const std::vector<std::string>& options, const std::string& preferred) {
    return rng.uniform() < 0.6 ? preferred : options[rng.below(options.size())];
  };

  for (const auto& category : taxonomy.top_level()) {
    auto count_it = spec.per_category.find(category);
    if (count_it == spec.per_category.end() || count_it->second == 0) continue;
    const std::size_t n = count_it->second;
    const auto& profile = spec.generators.at(category);
    const auto& children = taxonomy.children(category);
    std::size_t co_rows = 0;
    if (auto p = partner.find(category); p != partner.end())
      co_rows = static_cast<std::size_t>(std::llround(spec.co_label_fraction * static_cast<double>(n)));

    for (std::size_t j = 0; j < n; ++j) {
      const Asn asn = next_asn++;
      TagSet tags{category};
      if (!children.empty()) tags.insert(children[j % children.size()]);
      if (j < co_rows) {
        const auto& other = partner.at(category);
        tags.insert(other);
        if (taxonomy.node(other).level == Level::top) {
          const auto& oc = taxonomy.children(other);
          if (!oc.empty()) tags.insert(oc[j % oc.size()]);
        }
      }

      const auto& filler = fillers()[rng.below(fillers().size())];
      std::string keywords;
      for (const auto& t : taxonomy.ordered(tags)) {
        for (const auto& [kw, tag] : spec.keywords)
          if (tag == t) {
            keywords += " " + kw;
            break;
          }
      }

      ingest::MergedAsRecord m;
      m.asn = asn;
      m.as_name = {util::to_lower(filler) + "-" + std::to_string(asn % 100000), ingest::Source::ipinfo};
      m.org_name = {filler + keywords + " Group", ingest::Source::peeringdb};
      const auto country = pick(countries(), profile.country);
      m.as_country = {country, ingest::Source::ipinfo};
      m.website = {"https://www." + util::to_lower(filler) + std::to_string(asn % 100000) + ".example",
                   ingest::Source::ipinfo};

      std::array<double, kNumericFeatureCount> v{};
      for (std::size_t k = 0; k < kNumericFeatureCount; ++k)
        v[k] = std::exp(profile.log_mean[k] + profile.log_sd * rng.normal());
      auto count = [](double x) { return static_cast<std::uint64_t>(std::llround(x)); };
      const auto provider = count(v[1]);
      const auto customer = count(v[2]);
      m.deg_provider = provider;
      m.deg_customer = customer;
      m.deg_peer = count(v[0]);
      m.deg_total = provider + customer + *m.deg_peer;
      m.cone_asns = 1 + count(v[3]);
      m.cone_addrs = count(v[4]);
      m.cone_prefixes = 1 + count(v[5]);
      m.orig_prefixes = 1 + count(v[6]);
      m.orig_addrs = count(v[7]);
      if (rng.uniform() >= profile.users_missing) m.users = count(v[8]);
      const auto n_cone_countries = std::min<std::size_t>(countries().size(), 1 + count(v[12]));
      std::set<std::string> cc{country};
      while (cc.size() < n_cone_countries) cc.insert(countries()[rng.below(countries().size())]);
      m.cone_countries.assign(cc.begin(), cc.end());

      if (rng.uniform() >= profile.peeringdb_missing) {
        m.org_country = {country, ingest::Source::peeringdb};
        std::vector<ingest::Facility> facs;
        const auto n_fac = count(v[10]);
        for (std::uint64_t f = 0; f < n_fac; ++f)
          facs.push_back({1000 + rng.below(5000), std::nullopt, countries()[rng.below(countries().size())]});
        std::sort(facs.begin(), facs.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
        m.facilities = std::move(facs);
        m.ixp_port_mbps_total = count(v[9]);
        m.traffic_tier = pick(traffic_tiers(), profile.traffic_tier);
        m.geo_scope = pick(geo_scopes(), profile.geo_scope);
        m.traffic_asym = rng.uniform() < 0.5 ? "Balanced" : "Mostly Outbound";
      } else {
        m.org_country = {country, ingest::Source::asrank};
      }

      data.corpus.rows.push_back({asn, std::move(tags)});
      data.corpus.notes.push_back("synthetic");
      data.merged.push_back(std::move(m));
    }
  }
  return data;
}

}  // namespace linnaeus
