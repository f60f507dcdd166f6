int gcd(int a, int b) {
    while (b != 0) {
        int t = a % b;
        a = b;
        b = t;
    }
    return a;
}

/* Collatz steps from n, giving up after `limit` steps. */
int collatz(int n, int limit) {
    int steps = 0;
    while (n != 1 && steps < limit) {
        if ((n & 1) == 0)
            n = n >> 1;
        else
            n = 3 * n + 1;
        steps++;
    }
    return steps;
}
