#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace lrds {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& head, const Rest&... rest) {
    os << head;
    format_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
[[noreturn]] void raise(const Args&... args) {
    std::ostringstream os;
    detail::format_into(os, args...);
    throw Error(os.str());
}

template <typename... Args>
void check(bool cond, const Args&... args) {
    if (!cond) raise(args...);
}

}  // namespace lrds
