#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "hash.hpp"

namespace statenet {

// Versioned key-value config text:
//
//   # statenet-config v1
//   nodes = 1000
//   sweep_values = 4,8,16,32
//
// Unknown keys are rejected by the consumers, not the parser.  The config
// hash is the digest of the canonical re-emission, so semantically equal
// files hash identically.
class config_file {
public:
    static config_file parse(const std::string& text)
    {
        config_file cfg;
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        bool saw_header = false;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            if (line[0] == '#') {
                if (!saw_header) {
                    std::istringstream hs(line);
                    std::string hash_mark, name, ver;
                    hs >> hash_mark >> name >> ver;
                    if (name == "statenet-config" && ver != "v1")
                        throw config_error("unsupported config version " + ver);
                    saw_header = true;
                }
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw parse_error("expected key = value", lineno);
            std::string key = trim(line.substr(0, eq));
            std::string value = trim(line.substr(eq + 1));
            if (key.empty()) throw parse_error("empty key", lineno);
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static config_file load(const std::string& path)
    {
        std::ifstream in(path);
        if (!in) throw config_error("cannot open config file: " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get(const std::string& key, const std::string& fallback = {}) const
    {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::int64_t get_int(const std::string& key, std::int64_t fallback) const
    {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stoll(it->second);
        } catch (const std::exception&) {
            throw config_error("key '" + key + "' is not an integer: " + it->second);
        }
    }

    double get_double(const std::string& key, double fallback) const
    {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stod(it->second);
        } catch (const std::exception&) {
            throw config_error("key '" + key + "' is not a number: " + it->second);
        }
    }

    bool get_bool(const std::string& key, bool fallback) const
    {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw config_error("key '" + key + "' is not a boolean: " + it->second);
    }

    std::vector<double> get_list(const std::string& key) const
    {
        std::vector<double> out;
        auto it = values_.find(key);
        if (it == values_.end()) return out;
        std::istringstream in(it->second);
        std::string tok;
        while (std::getline(in, tok, ',')) {
            try {
                out.push_back(std::stod(trim(tok)));
            } catch (const std::exception&) {
                throw config_error("key '" + key + "' has a non-numeric element: " + tok);
            }
        }
        return out;
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string canonical() const
    {
        std::string out = "# statenet-config v1\n";
        for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
        return out;
    }

    std::string hash_hex() const
    {
        std::string c = canonical();
        return to_hex(sha256(bytes(c.begin(), c.end()))).substr(0, 16);
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    static std::string trim(std::string s)
    {
        auto issp = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
        while (!s.empty() && issp(s.front())) s.erase(s.begin());
        while (!s.empty() && issp(s.back())) s.pop_back();
        return s;
    }

    std::map<std::string, std::string> values_;
};

} // namespace statenet
