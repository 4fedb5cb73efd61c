#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include "focusnas/error.hpp"
#include "json.hpp"

namespace focusnas::detail {

inline void require_object(const nlohmann::json& j, std::string_view context) {
    require(j.is_object(), Errc::schema, std::string(context) + ": expected a JSON object");
}

/// Rejects any key outside `allowed`.
inline void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed, std::string_view context) {
    require_object(j, context);
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (auto a : allowed) known = known || key == a;
        require(known, Errc::schema, std::string(context) + ": unknown key '" + key + "'");
    }
}

/// Reads `key` into `out` when present, keeping the default otherwise.
template <class T>
void read_opt(const nlohmann::json& j, std::string_view key, T& out, std::string_view context) {
    const auto it = j.find(std::string(key));
    if (it == j.end()) return;
    try {
        out = it->get<T>();
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::schema, std::string(context) + "." + std::string(key) + ": " + e.what());
    }
}

template <class T>
T read_req(const nlohmann::json& j, std::string_view key, std::string_view context) {
    require(j.contains(std::string(key)), Errc::schema, std::string(context) + ": missing key '" + std::string(key) + "'");
    T out{};
    read_opt(j, key, out, context);
    return out;
}

}  // namespace focusnas::detail
