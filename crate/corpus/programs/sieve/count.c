extern int composite[256];

int count_primes(int n) {
    int c = 0;
    for (int i = 2; i < n; i++) {
        if (composite[i] != 0)
            continue;
        c++;
    }
    return c;
}
