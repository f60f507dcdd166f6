int data[128];

/* Fills the shared buffer with a linear congruential sequence. */
void fill(int seed, int n) {
    int s = seed;
    for (int i = 0; i < n; i++) {
        s = s * 1103515245 + 12345;
        data[i] = (s >> 16) & 255;
    }
}
