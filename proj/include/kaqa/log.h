#ifndef KAQA_LOG_H_
#define KAQA_LOG_H_

#include <string_view>

namespace kaqa {

// Process-wide stderr logging. Warnings always print; info is suppressed in
// quiet mode.
void SetQuiet(bool quiet);
bool IsQuiet();
void LogInfo(std::string_view message);
void LogWarning(std::string_view message);

}  // namespace kaqa

#endif  // KAQA_LOG_H_
