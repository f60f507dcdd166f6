void sieve(int n);
int count_primes(int n);

int main(int a, int b) {
    int n = 16 + ((a ^ b) & 255) % 240;
    sieve(n);
    return count_primes(n);
}
