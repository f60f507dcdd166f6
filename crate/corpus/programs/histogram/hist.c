int bins[16];

void clear() {
    for (int i = 0; i < 16; i++)
        bins[i] = 0;
}

/* Histogram of a pseudo-random stream; values are folded into 16 bins. */
void accumulate(int seed, int n) {
    int s = seed;
    for (int i = 0; i < n; i++) {
        s = s ^ (s << 13);
        s = s ^ (s >> 17);
        s = s ^ (s << 5);
        int v = s % 16;
        if (v < 0)
            v = -v;
        bins[v] = bins[v] + 1;
    }
}
