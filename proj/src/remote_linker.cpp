#include <httplib.h>

#include <json.hpp>

#include <atomic>
#include <regex>
#include <thread>

#include "cbe/error.hpp"
#include "cbe/kgstore.hpp"
#include "cbe/linker.hpp"
#include "cbe/text.hpp"

namespace cbe::linker {

namespace {

using nlohmann::json;

std::string qid_in(std::string_view s) {
  static const std::regex kQid(R"((?:^|/|^<)(Q[0-9]+)>?$)");
  std::match_results<std::string_view::const_iterator> m;
  if (std::regex_search(s.begin(), s.end(), m, kQid)) return m[1].str();
  return {};
}

struct RawMention {
  std::string qid;
  std::string surface;
};

bool raw_from_element(const json& el, RawMention& out) {
  if (el.is_string()) {
    out.qid = qid_in(el.get<std::string>());
    return !out.qid.empty();
  }
  if (el.is_array()) {
    for (const auto& part : el) {
      if (!part.is_string()) continue;
      const auto s = part.get<std::string>();
      if (out.qid.empty()) {
        out.qid = qid_in(s);
        if (!out.qid.empty()) continue;
      }
      if (out.surface.empty()) out.surface = s;
    }
    return !out.qid.empty();
  }
  if (el.is_object()) {
    for (const char* key : {"qid", "id", "URI", "uri", "iri", "wikidata", "entity"}) {
      auto it = el.find(key);
      if (it != el.end() && it->is_string()) {
        out.qid = qid_in(it->get<std::string>());
        if (!out.qid.empty()) break;
      }
    }
    if (out.qid.empty()) {
      for (const auto& [_, v] : el.items()) {
        if (v.is_string()) {
          out.qid = qid_in(v.get<std::string>());
          if (!out.qid.empty()) break;
        }
      }
    }
    for (const char* key : {"surface form", "surface_form", "surface", "mention", "label", "name", "text"}) {
      auto it = el.find(key);
      if (it != el.end() && it->is_string()) {
        out.surface = it->get<std::string>();
        break;
      }
    }
    return !out.qid.empty();
  }
  return false;
}

EntityMention locate(const RawMention& raw, std::string_view text) {
  EntityMention m;
  m.qid = raw.qid;
  m.source = Source::Remote;
  const std::string needle = normalize_surface(raw.surface);
  if (!needle.empty()) {
    const std::string hay = text::to_lower(text);
    auto pos = hay.size() == text.size() ? hay.find(needle) : text.find(raw.surface);
    const std::size_t len = hay.size() == text.size() ? needle.size() : raw.surface.size();
    if (pos != std::string::npos) {
      m.start = pos;
      m.end = pos + len;
      m.surface = std::string(text.substr(m.start, len));
    }
  }
  return m;
}

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // path plus query
};

Endpoint split_endpoint(const std::string& url) {
  static const std::regex kUrl(R"(^(https?://[^/?#]+)([^#]*)$)");
  std::smatch m;
  if (!std::regex_match(url, m, kUrl)) {
    throw Error(ErrorCode::NetworkError, "invalid endpoint URL '" + url + "'");
  }
  std::string path = m[2].str();
  if (path.empty()) path = "/";
  return {m[1].str(), path};
}

}  // namespace

std::vector<EntityMention> parse_remote_response(std::string_view body, std::string_view text) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::BadResponse, std::string("response is not JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::BadResponse, "response is not a JSON object");
  bool saw_array = false;
  for (const auto& [key, value] : doc.items()) {
    if (!value.is_array()) continue;
    saw_array = true;
    std::vector<EntityMention> mentions;
    for (const auto& el : value) {
      RawMention raw;
      if (raw_from_element(el, raw)) mentions.push_back(locate(raw, text));
    }
    if (!mentions.empty()) return mentions;
  }
  if (!saw_array) throw Error(ErrorCode::BadResponse, "response has no entity array");
  return {};
}

std::vector<EntityMention> recognize_remote(std::string_view text, const RemoteOptions& opts) {
  if (text.empty()) return {};
  const auto endpoint = split_endpoint(opts.endpoint);
  httplib::Client client(endpoint.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(opts.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(opts.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  const std::string body = json{{"text", std::string(text)}}.dump();
  const auto started = std::chrono::steady_clock::now();
  auto res = client.Post(endpoint.path, body, "application/json");
  if (!res) {
    const auto err = res.error();
    const auto elapsed = std::chrono::steady_clock::now() - started;
    if (err == httplib::Error::ConnectionTimeout ||
        (err == httplib::Error::Read && elapsed >= opts.timeout * 9 / 10)) {
      throw Error(ErrorCode::Timeout, "remote linker timed out: " + opts.endpoint);
    }
    throw Error(ErrorCode::NetworkError,
                "remote linker request failed (" + httplib::to_string(err) + "): " + opts.endpoint);
  }
  if (res->status < 200 || res->status >= 300) {
    throw Error(ErrorCode::BadResponse,
                "remote linker returned HTTP " + std::to_string(res->status));
  }
  return parse_remote_response(res->body, text);
}

std::vector<RemoteResult> recognize_remote_batch(const std::vector<std::string>& texts,
                                                 const RemoteOptions& opts) {
  std::vector<RemoteResult> results(texts.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < texts.size(); i = next++) {
      try {
        results[i].mentions = recognize_remote(texts[i], opts);
      } catch (const Error& e) {
        results[i].error = std::string(error_code_name(e.code())) + ": " + e.what();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(opts.max_concurrency, texts.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return results;
}

}  // namespace cbe::linker
