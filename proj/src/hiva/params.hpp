#pragma once

#include "hiva/autodiff.hpp"
#include "hiva/rng.hpp"

#include <map>
#include <stdexcept>
#include <string>

namespace hiva {

// Flat, name-ordered parameter table. Names are dotted paths whose first
// segment identifies the owning module ("vision.", "text.", "branch.", ...),
// which is what the stage-wise trainable sets key on.
class ParamStore {
public:
    ad::Mat& add(const std::string& name, ad::Mat init) {
        auto [it, fresh] = values_.emplace(name, std::move(init));
        if (!fresh) throw std::logic_error("duplicate parameter: " + name);
        return it->second;
    }

    ad::Mat& at(const std::string& name) {
        auto it = values_.find(name);
        if (it == values_.end()) throw std::out_of_range("unknown parameter: " + name);
        return it->second;
    }

    const ad::Mat& at(const std::string& name) const {
        auto it = values_.find(name);
        if (it == values_.end()) throw std::out_of_range("unknown parameter: " + name);
        return it->second;
    }

    bool has(const std::string& name) const { return values_.count(name) != 0; }

    const std::map<std::string, ad::Mat>& all() const { return values_; }
    std::map<std::string, ad::Mat>& all() { return values_; }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& [k, v] : values_) n += static_cast<std::size_t>(v.size());
        return n;
    }

private:
    std::map<std::string, ad::Mat> values_;
};

// Per-pass leaf bindings of parameters.
using VarMap = std::map<std::string, ad::Var>;

inline VarMap bind_params(ad::Tape& tape, const ParamStore& store, bool needs_grad = true) {
    VarMap out;
    for (const auto& [name, value] : store.all())
        out.emplace(name, tape.leaf(value, needs_grad));
    return out;
}

inline ad::Mat glorot(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
    ad::Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-s, s);
    return m;
}

}  // namespace hiva
