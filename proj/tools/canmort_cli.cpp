#include <cstdio>
int main() { std::puts("canmort"); return 0; }
