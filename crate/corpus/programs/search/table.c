int keys[64];

void build(int seed) {
    int v = seed & 7;
    for (int i = 0; i < 64; i++) {
        v = v + 1 + ((seed >> (i & 15)) & 3);
        keys[i] = v;
    }
}
