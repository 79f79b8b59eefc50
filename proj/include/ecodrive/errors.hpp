#pragma once

#include <stdexcept>
#include <string>

namespace ecodrive {

/// Malformed or inconsistent configuration / input data. The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Data error attributed to a file and a field inside it.
inline DataError data_error(const std::string& file, const std::string& field, const std::string& what)
{
    std::string msg = file.empty() ? std::string{} : file + ": ";
    if (!field.empty()) {
        msg += "field '" + field + "': ";
    }
    return DataError{msg + what};
}

}  // namespace ecodrive
