#pragma once

#define BIWEIBULL_VERSION_MAJOR 0
#define BIWEIBULL_VERSION_MINOR 1
#define BIWEIBULL_VERSION_PATCH 0
#define BIWEIBULL_VERSION "0.1.0"
