#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace falab::cfg {

using Json = nlohmann::json;

/// Strict accessor over one JSON object: every getter records its key, and
/// finish() rejects any key that was never consumed, naming the object it
/// sits in. All type mismatches are reported with the same location.
class View {
 public:
  View(const Json& j, std::string file, std::string location)
      : j_(&j), file_(std::move(file)), loc_(std::move(location)) {
    if (!j.is_object()) fail("must be a JSON object");
  }

  bool has(const std::string& key) const { return j_->contains(key); }

  double num(const std::string& key) const {
    const Json& v = fetch(key);
    if (!v.is_number()) fail_key(key, "must be a number");
    return v.get<double>();
  }
  double num(const std::string& key, double def) const {
    return has(key) ? num(key) : (touch(key), def);
  }

  std::uint64_t uint(const std::string& key) const {
    const Json& v = fetch(key);
    if (!v.is_number_unsigned()) fail_key(key, "must be a non-negative integer");
    return v.get<std::uint64_t>();
  }
  std::uint64_t uint(const std::string& key, std::uint64_t def) const {
    return has(key) ? uint(key) : (touch(key), def);
  }

  std::size_t size(const std::string& key) const {
    return static_cast<std::size_t>(uint(key));
  }
  std::size_t size(const std::string& key, std::size_t def) const {
    return static_cast<std::size_t>(uint(key, def));
  }

  bool flag(const std::string& key) const {
    const Json& v = fetch(key);
    if (!v.is_boolean()) fail_key(key, "must be true or false");
    return v.get<bool>();
  }
  bool flag(const std::string& key, bool def) const {
    return has(key) ? flag(key) : (touch(key), def);
  }

  std::string str(const std::string& key) const {
    const Json& v = fetch(key);
    if (!v.is_string()) fail_key(key, "must be a string");
    return v.get<std::string>();
  }
  std::string str(const std::string& key, const std::string& def) const {
    return has(key) ? str(key) : (touch(key), def);
  }

  std::vector<double> num_list(const std::string& key) const {
    const Json& v = fetch(key);
    if (!v.is_array()) fail_key(key, "must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) fail_key(key, "must be an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }
  std::vector<double> num_list(const std::string& key, std::vector<double> def) const {
    return has(key) ? num_list(key) : (touch(key), std::move(def));
  }

  std::vector<std::size_t> size_list(const std::string& key) const {
    const Json& v = fetch(key);
    if (!v.is_array()) fail_key(key, "must be an array of non-negative integers");
    std::vector<std::size_t> out;
    for (const auto& e : v) {
      if (!e.is_number_unsigned()) fail_key(key, "must be an array of non-negative integers");
      out.push_back(e.get<std::size_t>());
    }
    return out;
  }
  std::vector<std::size_t> size_list(const std::string& key,
                                     std::vector<std::size_t> def) const {
    return has(key) ? size_list(key) : (touch(key), std::move(def));
  }

  std::vector<std::string> str_list(const std::string& key) const {
    const Json& v = fetch(key);
    if (!v.is_array()) fail_key(key, "must be an array of strings");
    std::vector<std::string> out;
    for (const auto& e : v) {
      if (!e.is_string()) fail_key(key, "must be an array of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  /// Array of fixed-length numeric arrays, e.g. [[3,2],[4,2]].
  std::vector<std::vector<double>> tuple_list(const std::string& key,
                                              std::size_t arity) const {
    const Json& v = fetch(key);
    if (!v.is_array()) fail_key(key, "must be an array of arrays");
    std::vector<std::vector<double>> out;
    for (const auto& e : v) {
      if (!e.is_array() || e.size() != arity)
        fail_key(key, "must contain arrays of length " + std::to_string(arity));
      std::vector<double> row;
      for (const auto& x : e) {
        if (!x.is_number()) fail_key(key, "must contain numeric arrays");
        row.push_back(x.get<double>());
      }
      out.push_back(std::move(row));
    }
    return out;
  }

  View object(const std::string& key) const {
    const Json& v = fetch(key);
    return View(v, file_, loc_.empty() ? key : loc_ + "." + key);
  }

  std::vector<View> object_list(const std::string& key) const {
    const Json& v = fetch(key);
    if (!v.is_array()) fail_key(key, "must be an array of objects");
    std::vector<View> out;
    for (std::size_t i = 0; i < v.size(); ++i)
      out.emplace_back(v[i], file_,
                       (loc_.empty() ? key : loc_ + "." + key) + "[" +
                           std::to_string(i) + "]");
    return out;
  }

  /// Reject keys no getter asked about.
  void finish() const {
    for (const auto& item : j_->items())
      if (consumed_.find(item.key()) == consumed_.end())
        fail("unknown key '" + item.key() + "'");
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw std::runtime_error(file_ + ": " + (loc_.empty() ? "top level" : "'" + loc_ + "'") +
                             ": " + msg);
  }
  [[noreturn]] void fail_key(const std::string& key, const std::string& msg) const {
    fail("key '" + key + "' " + msg);
  }

 private:
  const Json& fetch(const std::string& key) const {
    touch(key);
    if (!j_->contains(key)) fail("missing required key '" + key + "'");
    return (*j_)[key];
  }
  bool touch(const std::string& key) const {
    consumed_.insert(key);
    return true;
  }

  const Json* j_;
  std::string file_;
  std::string loc_;
  mutable std::set<std::string> consumed_;
};

Json load_config_file(const std::string& path);

}  // namespace falab::cfg
