#include <cstdio>
int main() { std::puts("fql: placeholder"); return 0; }
