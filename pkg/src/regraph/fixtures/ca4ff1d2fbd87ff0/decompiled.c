// decompiled from re-optimized IR
#include <stdint.h>

// address 0x74
void function_74(int32_t * ts) {
    int32_t v1 = *(ts + 4);
    if (v1 >= 1000000000) {
        *ts = *ts + 1;
        *(ts + 4) = v1 - 1000000000;
    } else {
        if (v1 < 0) {
            *ts = *ts - 1;
            *(ts + 4) = v1 + 1000000000;
        }
    }
    return;
}

// address 0x104
int32_t function_104(int32_t * result, int32_t a2, int32_t a3, int32_t a4, int32_t a5) {
    *result = a2 + a4;
    *(result + 4) = a3 + a5;
    function_74(result);
    return (int32_t)result;
}

// address 0x154
int32_t function_154(int32_t * result, int32_t a2, int32_t a3, int32_t a4, int32_t a5) {
    *result = a2 - a4;
    *(result + 4) = a3 - a5;
    function_74(result);
    return (int32_t)result;
}

// address 0x2cc8
void function_2cc8(int32_t * data) {
    int32_t v1 = *(data + 8);
    if (v1 != 0) {
        *(data + 12) = *(data + 12) + *(data + 16) * *(data + 20);
    }
    *(data + 24) = *(data + 12);
    return;
}
