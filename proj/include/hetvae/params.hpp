#pragma once

#include <map>
#include <string>
#include <vector>

#include "hetvae/array.hpp"
#include "hetvae/errors.hpp"

namespace hetvae {

// Named parameter tree. Names are dot-separated paths ("untan.enc.h0.omega");
// map ordering gives deterministic lexicographic iteration everywhere the
// optimizer or checkpoint walks the store.
class ParamStore {
  public:
    struct Entry {
        Array value;
        bool trainable = true;
    };

    void add(const std::string& name, Array value, bool trainable = true) {
        if (entries_.count(name)) throw config_error("duplicate parameter name: " + name);
        entries_[name] = Entry{std::move(value), trainable};
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    const Array& at(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw config_error("unknown parameter: " + name);
        return it->second.value;
    }

    Array& mutable_at(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw config_error("unknown parameter: " + name);
        return it->second.value;
    }

    bool trainable(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw config_error("unknown parameter: " + name);
        return it->second.trainable;
    }

    void set_trainable(const std::string& name, bool t) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw config_error("unknown parameter: " + name);
        it->second.trainable = t;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& [k, v] : entries_) out.push_back(k);
        return out;
    }

    const std::map<std::string, Entry>& entries() const { return entries_; }

    std::size_t size() const { return entries_.size(); }

  private:
    std::map<std::string, Entry> entries_;
};

// Gradient keyed by parameter name; ordered for deterministic accumulation.
using GradMap = std::map<std::string, Array>;

inline void accumulate(GradMap& into, const GradMap& from) {
    for (const auto& [name, g] : from) {
        auto it = into.find(name);
        if (it == into.end()) {
            into[name] = g;
        } else {
            if (!it->second.same_shape(g))
                throw dim_error("gradient shape mismatch for " + name);
            for (std::size_t i = 0; i < g.size(); ++i) it->second.data[i] += g.data[i];
        }
    }
}

}  // namespace hetvae
