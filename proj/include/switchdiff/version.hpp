#pragma once

#define SWITCHDIFF_VERSION_MAJOR 0
#define SWITCHDIFF_VERSION_MINOR 1
#define SWITCHDIFF_VERSION_PATCH 0
#define SWITCHDIFF_VERSION "0.1.0"
