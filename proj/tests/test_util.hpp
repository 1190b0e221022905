#pragma once

#include <fstream>
#include <sstream>
#include <string>

#ifndef POPPROTO_PROTOCOLS_DIR
#define POPPROTO_PROTOCOLS_DIR "protocols"
#endif

inline std::string protocol_file(const std::string& name) {
    return std::string(POPPROTO_PROTOCOLS_DIR) + "/" + name;
}

inline std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}
