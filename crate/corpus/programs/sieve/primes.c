int composite[256];

void sieve(int n) {
    for (int i = 0; i < n; i++)
        composite[i] = 0;
    for (int p = 2; p * p < n; p++) {
        if (composite[p] == 0) {
            for (int m = p * p; m < n; m += p)
                composite[m] = 1;
        }
    }
}
