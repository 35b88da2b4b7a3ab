// decompiled from re-optimized IR
#include <stdint.h>

// address 0x8049120
void __normalize_timespec(int32_t * ts) {
    int32_t v1 = *(ts + 4);
    int32_t v2 = v1 >= 1000000000;
    if (v2 != 0) {
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

// address 0x80491a0
int32_t __time_add(int32_t * result, int32_t a2, int32_t a3, int32_t a4, int32_t a5) {
    int32_t v1 = a2 + a4;
    int32_t v2 = a3 + a5;
    int32_t v3 = result;
    *v3 = v1;
    *(v3 + 4) = v2;
    __normalize_timespec(v3);
    return (int32_t)v3;
}

// address 0x80491f4
int32_t __time_sub(int32_t * result, int32_t a2, int32_t a3, int32_t a4, int32_t a5) {
    int32_t v1 = a2 - a4;
    int32_t v2 = a3 - a5;
    int32_t v3 = result;
    *v3 = v1;
    *(v3 + 4) = v2;
    __normalize_timespec(v3);
    return (int32_t)v3;
}

// address 0x804a6c8
void INTEGRAL_body__(int32_t * data) {
    int32_t v1 = *(data + 8);
    int32_t v2 = *(data + 12) + *(data + 16) * *(data + 20);
    if (v1 != 0) {
        *(data + 12) = v2;
    }
    *(data + 24) = *(data + 12);
    return;
}
